//! Shared helpers for the integration suites: the frozen-case format
//! (flat `key = value` records) and its directory loader.

#![allow(dead_code)]

use hypermotion::{Configuration, MassSystem};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

/// One frozen oracle case.
#[derive(Clone, Debug)]
pub struct OracleCase {
    pub name: String,
    pub kind: String,
    pub seed: u64,
    pub masses: Vec<f64>,
    pub dim: usize,
    pub h: f64,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub oracle_value: f64,
    pub oracle_tof: Option<f64>,
}

impl OracleCase {
    pub fn system(&self) -> MassSystem {
        MassSystem::new(self.masses.clone(), self.dim).unwrap()
    }

    pub fn endpoints(&self) -> (Configuration, Configuration) {
        (
            Configuration::from_flat(self.x.clone(), self.dim).unwrap(),
            Configuration::from_flat(self.y.clone(), self.dim).unwrap(),
        )
    }

    pub fn render(&self) -> String {
        let vec_str = |v: &[f64]| {
            let items: Vec<String> = v.iter().map(|x| format!("{x:.17e}")).collect();
            format!("[{}]", items.join(", "))
        };
        let mut out = String::new();
        out.push_str(&format!("# frozen oracle case: {}\n", self.name));
        out.push_str(&format!("kind = {}\n", self.kind));
        out.push_str(&format!("seed = {}\n", self.seed));
        out.push_str(&format!("masses = {}\n", vec_str(&self.masses)));
        out.push_str(&format!("dim = {}\n", self.dim));
        out.push_str(&format!("h = {:.17e}\n", self.h));
        out.push_str(&format!("x = {}\n", vec_str(&self.x)));
        out.push_str(&format!("y = {}\n", vec_str(&self.y)));
        out.push_str(&format!("oracle_value = {:.17e}\n", self.oracle_value));
        if let Some(t) = self.oracle_tof {
            out.push_str(&format!("oracle_tof = {t:.17e}\n"));
        }
        out
    }

    pub fn parse(name: &str, text: &str) -> OracleCase {
        let mut map: BTreeMap<String, String> = BTreeMap::new();
        for line in text.lines() {
            let line = line.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').expect("key = value line");
            map.insert(k.trim().to_string(), v.trim().to_string());
        }
        let get = |k: &str| map.get(k).unwrap_or_else(|| panic!("case {name}: missing {k}"));
        let parse_vec = |s: &str| -> Vec<f64> {
            s.trim_start_matches('[')
                .trim_end_matches(']')
                .split(',')
                .map(|t| t.trim().parse().expect("number"))
                .collect()
        };
        OracleCase {
            name: name.to_string(),
            kind: get("kind").clone(),
            seed: get("seed").parse().unwrap(),
            masses: parse_vec(get("masses")),
            dim: get("dim").parse().unwrap(),
            h: get("h").parse().unwrap(),
            x: parse_vec(get("x")),
            y: parse_vec(get("y")),
            oracle_value: get("oracle_value").parse().unwrap(),
            oracle_tof: map.get("oracle_tof").map(|s| s.parse().unwrap()),
        }
    }
}

pub fn corpus_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/corpus")
}

pub fn load_corpus() -> Vec<OracleCase> {
    let mut out = Vec::new();
    let mut entries: Vec<_> = std::fs::read_dir(corpus_dir())
        .expect("corpus directory present")
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().map(|e| e == "case").unwrap_or(false))
        .collect();
    entries.sort();
    for p in entries {
        let name = p.file_stem().unwrap().to_string_lossy().to_string();
        let text = std::fs::read_to_string(&p).unwrap();
        out.push(OracleCase::parse(&name, &text));
    }
    out
}
