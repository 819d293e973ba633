//! JSON file formats. Complex numbers are `[re, im]` pairs.

use std::collections::BTreeMap;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::compiler::{CircuitProgram, MziSetting};
use crate::error::{Error, Result};
use crate::linalg::{c64, CMatrix, Ket};
use crate::povm::{Element, OperatorPovm, Povm, StateSet};
use crate::simulator::{CountTable, PhaseError, Shifter};

type Pair = [f64; 2];

fn ket_to_json(k: &Ket) -> Vec<Pair> {
    k.iter().map(|z| [z.re, z.im]).collect()
}

fn ket_from_json(v: &[Pair]) -> Ket {
    Ket::from_iterator(v.len(), v.iter().map(|p| c64(p[0], p[1])))
}

fn check_len(what: &str, got: usize, dim: usize) -> Result<()> {
    if got != dim {
        return Err(Error::InvalidInput(format!(
            "{what} has length {got}, expected {dim}"
        )));
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct ElementJson {
    weight: f64,
    ket: Vec<Pair>,
}

#[derive(Serialize, Deserialize)]
struct PovmJson {
    dim: usize,
    elements: Vec<ElementJson>,
}

#[derive(Serialize, Deserialize)]
struct OperatorPovmJson {
    dim: usize,
    matrices: Vec<Vec<Vec<Pair>>>,
}

#[derive(Serialize, Deserialize)]
struct StateSetJson {
    dim: usize,
    states: Vec<Vec<Pair>>,
}

#[derive(Serialize, Deserialize)]
struct ProgramJson {
    dim: usize,
    n_outcomes: usize,
    modules: Vec<Vec<MziJson>>,
}

#[derive(Serialize, Deserialize)]
struct MziJson {
    alpha: f64,
    beta: f64,
}

#[derive(Serialize, Deserialize)]
struct CountTableJson {
    outcomes: usize,
    probes: usize,
    rows: Vec<Vec<f64>>,
}

pub fn povm_to_json(p: &Povm) -> String {
    let j = PovmJson {
        dim: p.dim,
        elements: p
            .elements
            .iter()
            .map(|e| ElementJson {
                weight: e.weight,
                ket: ket_to_json(&e.ket),
            })
            .collect(),
    };
    serde_json::to_string_pretty(&j).expect("serializable")
}

/// Parses the rank-1 format; shape is checked, POVM validity is not.
pub fn povm_from_json(s: &str) -> Result<Povm> {
    let j: PovmJson = serde_json::from_str(s)?;
    let mut elements = Vec::with_capacity(j.elements.len());
    for (i, e) in j.elements.iter().enumerate() {
        check_len(&format!("ket of element {}", i + 1), e.ket.len(), j.dim)?;
        elements.push(Element {
            weight: e.weight,
            ket: ket_from_json(&e.ket),
        });
    }
    Ok(Povm {
        dim: j.dim,
        elements,
    })
}

fn matrix_to_json(m: &CMatrix) -> Vec<Vec<Pair>> {
    (0..m.nrows())
        .map(|r| (0..m.ncols()).map(|c| [m[(r, c)].re, m[(r, c)].im]).collect())
        .collect()
}

pub fn operator_povm_to_json(p: &OperatorPovm) -> String {
    let j = OperatorPovmJson {
        dim: p.dim,
        matrices: p.matrices.iter().map(matrix_to_json).collect(),
    };
    serde_json::to_string_pretty(&j).expect("serializable")
}

pub fn operator_povm_from_json(s: &str) -> Result<OperatorPovm> {
    let j: OperatorPovmJson = serde_json::from_str(s)?;
    let mut matrices = Vec::with_capacity(j.matrices.len());
    for (i, rows) in j.matrices.iter().enumerate() {
        check_len(&format!("matrix {}", i + 1), rows.len(), j.dim)?;
        for r in rows {
            check_len(&format!("row of matrix {}", i + 1), r.len(), j.dim)?;
        }
        matrices.push(CMatrix::from_fn(j.dim, j.dim, |r, c| {
            c64(rows[r][c][0], rows[r][c][1])
        }));
    }
    Ok(OperatorPovm {
        dim: j.dim,
        matrices,
    })
}

pub fn state_set_to_json(s: &StateSet) -> String {
    let j = StateSetJson {
        dim: s.dim,
        states: s.states.iter().map(ket_to_json).collect(),
    };
    serde_json::to_string_pretty(&j).expect("serializable")
}

pub fn state_set_from_json(s: &str) -> Result<StateSet> {
    let j: StateSetJson = serde_json::from_str(s)?;
    for (i, k) in j.states.iter().enumerate() {
        check_len(&format!("state {}", i + 1), k.len(), j.dim)?;
    }
    Ok(StateSet {
        dim: j.dim,
        states: j.states.iter().map(|k| ket_from_json(k)).collect(),
    })
}

pub fn program_to_json(p: &CircuitProgram) -> String {
    let j = ProgramJson {
        dim: p.dim,
        n_outcomes: p.n_outcomes,
        modules: p
            .modules
            .iter()
            .map(|m| {
                m.iter()
                    .map(|s| MziJson {
                        alpha: s.alpha,
                        beta: s.beta,
                    })
                    .collect()
            })
            .collect(),
    };
    serde_json::to_string_pretty(&j).expect("serializable")
}

pub fn program_from_json(s: &str) -> Result<CircuitProgram> {
    let j: ProgramJson = serde_json::from_str(s)?;
    let p = CircuitProgram {
        dim: j.dim,
        n_outcomes: j.n_outcomes,
        modules: j
            .modules
            .into_iter()
            .map(|m| {
                m.into_iter()
                    .map(|s| MziSetting {
                        alpha: s.alpha,
                        beta: s.beta,
                    })
                    .collect()
            })
            .collect(),
    };
    p.check_shape()?;
    Ok(p)
}

pub fn count_table_to_json(t: &CountTable) -> String {
    let j = CountTableJson {
        outcomes: t.outcomes,
        probes: t.probes,
        rows: t.rows.clone(),
    };
    serde_json::to_string_pretty(&j).expect("serializable")
}

pub fn count_table_from_json(s: &str) -> Result<CountTable> {
    let j: CountTableJson = serde_json::from_str(s)?;
    let t = CountTable {
        outcomes: j.outcomes,
        probes: j.probes,
        rows: j.rows,
    };
    t.check()?;
    Ok(t)
}

/// Keys `"i.j.alpha"` / `"i.j.beta"`, module and MZI 1-based.
pub fn phase_error_to_json(e: &PhaseError) -> String {
    let map: BTreeMap<String, f64> = e
        .deviations
        .iter()
        .map(|(&(i, j, s), &v)| (format!("{i}.{j}.{}", s.as_str()), v))
        .collect();
    serde_json::to_string_pretty(&map).expect("serializable")
}

pub fn phase_error_from_json(s: &str) -> Result<PhaseError> {
    let map: BTreeMap<String, f64> = serde_json::from_str(s)?;
    let mut e = PhaseError::default();
    for (key, v) in map {
        let parts: Vec<&str> = key.split('.').collect();
        let bad = || Error::InvalidInput(format!("bad phase key {key:?}"));
        if parts.len() != 3 {
            return Err(bad());
        }
        let i: usize = parts[0].parse().map_err(|_| bad())?;
        let j: usize = parts[1].parse().map_err(|_| bad())?;
        let shifter = match parts[2] {
            "alpha" => Shifter::Alpha,
            "beta" => Shifter::Beta,
            _ => return Err(bad()),
        };
        if i == 0 || j == 0 {
            return Err(bad());
        }
        e.set(i, j, shifter, v);
    }
    e.check_finite()?;
    Ok(e)
}

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| {
        Error::InvalidInput(format!("cannot read {}: {e}", path.display()))
    })
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(Error::from)
}

pub fn to_json_value<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("serializable")
}

pub fn from_json_value<T: DeserializeOwned>(v: serde_json::Value) -> Result<T> {
    Ok(serde_json::from_value(v)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compiler::compile;
    use crate::linalg::max_abs;
    use crate::povm::{mub_probe_states_d4, sic_povm_d4};

    #[test]
    fn povm_round_trip() {
        let p = sic_povm_d4();
        let back = povm_from_json(&povm_to_json(&p)).unwrap();
        assert_eq!(back.dim, 4);
        for (a, b) in p.elements.iter().zip(back.elements.iter()) {
            assert_eq!(a.weight, b.weight);
            assert!((&a.ket - &b.ket).norm() == 0.0);
        }
    }

    #[test]
    fn operator_povm_round_trip() {
        let p = sic_povm_d4().to_operator_povm();
        let back = operator_povm_from_json(&operator_povm_to_json(&p)).unwrap();
        for (a, b) in p.matrices.iter().zip(back.matrices.iter()) {
            assert_eq!(max_abs(&(a - b)), 0.0);
        }
    }

    #[test]
    fn program_and_table_round_trip() {
        let (prog, _) = compile(&sic_povm_d4()).unwrap();
        assert_eq!(program_from_json(&program_to_json(&prog)).unwrap(), prog);
        let t = crate::simulator::probability_table(&prog, &mub_probe_states_d4(), None).unwrap();
        assert_eq!(count_table_from_json(&count_table_to_json(&t)).unwrap(), t);
        let s = mub_probe_states_d4();
        assert_eq!(state_set_from_json(&state_set_to_json(&s)).unwrap(), s);
    }

    #[test]
    fn phase_error_keys() {
        let mut e = PhaseError::default();
        e.set(2, 3, Shifter::Beta, 0.05);
        let text = phase_error_to_json(&e);
        assert!(text.contains("\"2.3.beta\""));
        assert_eq!(phase_error_from_json(&text).unwrap(), e);
        assert!(phase_error_from_json("{\"1.x.alpha\": 0.1}").is_err());
        assert!(phase_error_from_json("{\"0.1.alpha\": 0.1}").is_err());
    }

    #[test]
    fn malformed_input_is_an_input_error() {
        let err = povm_from_json("{\"dim\": 2, \"elements\": [").unwrap_err();
        assert!(err.is_input_error());
        let err = povm_from_json("{\"dim\": 2, \"elements\": [{\"weight\": 1, \"ket\": [[1,0]]}]}")
            .unwrap_err();
        assert!(err.is_input_error());
        let err = program_from_json("{\"dim\": 2, \"n_outcomes\": 3, \"modules\": []}").unwrap_err();
        assert!(err.is_input_error());
    }
}
