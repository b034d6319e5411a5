use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::QueryGenError;
use crate::dataset::{is_placeholder, SlotKind, Template};
use crate::slots::SlotCandidates;
use crate::sparql::{is_valid_iri, RDF_TYPE};

/// Slot assignment for one template.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Binding {
    pub template: u32,
    pub slots: BTreeMap<String, String>,
}

impl Binding {
    pub fn new<I, K, V>(template: u32, pairs: I) -> Self
    where
        I: IntoIterator<Item = (K, V)>,
        K: Into<String>,
        V: Into<String>,
    {
        Binding {
            template,
            slots: pairs.into_iter().map(|(k, v)| (k.into(), v.into())).collect(),
        }
    }

    pub fn get(&self, slot: &str) -> Option<&str> {
        self.slots.get(slot).map(String::as_str)
    }
}

/// Removes every `OPTIONAL { ... }` block mentioning `<name>`.
fn drop_optional(pattern: &str, name: &str) -> String {
    let needle = format!("<{name}>");
    let mut out = pattern.to_string();
    let mut from = 0;
    while let Some(rel) = out[from..].find("OPTIONAL") {
        let start = from + rel;
        let Some(open) = out[start..].find('{').map(|i| start + i) else {
            break;
        };
        let mut depth = 0;
        let mut close = None;
        for (i, ch) in out[open..].char_indices() {
            match ch {
                '{' => depth += 1,
                '}' => {
                    depth -= 1;
                    if depth == 0 {
                        close = Some(open + i);
                        break;
                    }
                }
                _ => {}
            }
        }
        let Some(close) = close else {
            break;
        };
        if out[open..close].contains(&needle) {
            out.replace_range(start..=close, "");
            from = start;
        } else {
            from = close;
        }
    }
    out
}

/// Fills a template's placeholders. An absent optional slot removes the
/// OPTIONAL block that mentions it.
pub fn instantiate(template: &Template, binding: &Binding) -> Result<String, QueryGenError> {
    for name in binding.slots.keys() {
        if template.slot(name).is_none() {
            return Err(QueryGenError::UnknownSlot {
                template: template.id,
                slot: name.clone(),
            });
        }
    }
    let mut pattern = template.pattern.clone();
    for slot in &template.slots {
        match binding.get(&slot.name) {
            Some(iri) if !is_valid_iri(iri) => {
                return Err(QueryGenError::BadIri {
                    slot: slot.name.clone(),
                    iri: iri.to_string(),
                })
            }
            Some(_) => {}
            None if slot.required => {
                return Err(QueryGenError::MissingSlot {
                    template: template.id,
                    slot: slot.name.clone(),
                })
            }
            None => pattern = drop_optional(&pattern, &slot.name),
        }
    }
    let mut out = String::with_capacity(pattern.len() + 128);
    let mut rest = pattern.as_str();
    while let Some(lt) = rest.find('<') {
        out.push_str(&rest[..lt]);
        let Some(gt) = rest[lt..].find('>').map(|i| lt + i) else {
            out.push_str(&rest[lt..]);
            rest = "";
            break;
        };
        let inner = &rest[lt + 1..gt];
        match binding.get(inner) {
            Some(iri) => {
                out.push('<');
                out.push_str(iri);
                out.push('>');
            }
            None if is_placeholder(inner) => {
                return Err(QueryGenError::MissingSlot {
                    template: template.id,
                    slot: inner.to_string(),
                })
            }
            None => out.push_str(&rest[lt..=gt]),
        }
        rest = &rest[gt + 1..];
    }
    out.push_str(rest);
    let expanded = out
        .split_whitespace()
        .map(|tok| if tok == "rdf:type" { format!("<{RDF_TYPE}>") } else { tok.to_string() })
        .collect::<Vec<_>>()
        .join(" ");
    Ok(expanded)
}

/// Lazy Cartesian product of slot candidates in rank order.
#[derive(Debug, Clone)]
pub struct BindingStream {
    template: u32,
    names: Vec<String>,
    lists: Vec<Vec<String>>,
    /// Optional class slot name and its candidates.
    class: Option<(String, Vec<String>)>,
    odometer: Vec<usize>,
    class_pos: usize,
    done: bool,
}

impl BindingStream {
    /// Number of bindings the stream yields in total.
    pub fn total(&self) -> usize {
        let core: usize = self.lists.iter().map(Vec::len).product();
        core * self.class.as_ref().map_or(1, |(_, c)| c.len() + 1)
    }

    fn advance(&mut self) {
        if let Some((_, classes)) = &self.class {
            if self.class_pos < classes.len() {
                self.class_pos += 1;
                return;
            }
            self.class_pos = 0;
        }
        for i in (0..self.odometer.len()).rev() {
            self.odometer[i] += 1;
            if self.odometer[i] < self.lists[i].len() {
                return;
            }
            self.odometer[i] = 0;
        }
        self.done = true;
    }
}

impl Iterator for BindingStream {
    type Item = Binding;

    fn next(&mut self) -> Option<Binding> {
        if self.done {
            return None;
        }
        let mut slots: BTreeMap<String, String> = self
            .names
            .iter()
            .zip(&self.lists)
            .zip(&self.odometer)
            .map(|((n, list), &i)| (n.clone(), list[i].clone()))
            .collect();
        if let Some((name, classes)) = &self.class {
            if self.class_pos > 0 {
                slots.insert(name.clone(), classes[self.class_pos - 1].clone());
            }
        }
        self.advance();
        Some(Binding {
            template: self.template,
            slots,
        })
    }
}

/// Bindings in lexicographic rank order, earlier slots varying slowest.
/// Each core binding comes first without the optional class, then with
/// every class candidate.
pub fn enumerate_bindings(template: &Template, cands: &SlotCandidates) -> Result<BindingStream, QueryGenError> {
    let mut names = Vec::new();
    let mut lists = Vec::new();
    let mut class = None;
    for slot in &template.slots {
        let list: Vec<String> = cands.of_kind(slot.kind).into_iter().map(String::from).collect();
        if slot.kind == SlotKind::Class && !slot.required {
            class = Some((slot.name.clone(), list));
            continue;
        }
        if list.is_empty() {
            return Err(QueryGenError::EmptySlot {
                template: template.id,
                slot: slot.name.clone(),
            });
        }
        names.push(slot.name.clone());
        lists.push(list);
    }
    Ok(BindingStream {
        template: template.id,
        odometer: vec![0; names.len()],
        names,
        lists,
        class,
        class_pos: 0,
        done: false,
    })
}
