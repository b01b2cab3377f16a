use super::{
    BranchRecord, BranchStatus, BusKind, BusRecord, CaseDefinition, MachineParams, UNRATED_LIMIT,
};
use crate::error::{Error, Result};
use crate::protection::RelayConfig;

pub const NATIVE_FORMAT_VERSION: u32 = 1;

/// Parses either the native JSON schema or the power-flow table format,
/// chosen by the first non-blank character.
pub fn parse_case(text: &str) -> Result<CaseDefinition> {
    if text.trim_start().starts_with('{') {
        parse_json_case(text)
    } else {
        parse_matpower_case(text)
    }
}

pub fn parse_json_case(text: &str) -> Result<CaseDefinition> {
    let case: CaseDefinition = serde_json::from_str(text).map_err(|e| Error::Parse {
        line: e.line(),
        msg: format!("column {}: {e}", e.column()),
    })?;
    if case.version != NATIVE_FORMAT_VERSION {
        return Err(Error::Parse {
            line: 1,
            msg: format!("unsupported case format version {}", case.version),
        });
    }
    case.validate()?;
    Ok(case)
}

pub fn to_json(case: &CaseDefinition) -> String {
    serde_json::to_string_pretty(case).expect("case serializes")
}

struct Matrix {
    rows: Vec<(usize, Vec<f64>)>,
}

/// Best-effort reader for MATPOWER-style case text: `baseMVA`, and the
/// `bus`, `gen` and `branch` matrices as whitespace-separated rows. Other
/// matrices are skipped.
pub fn parse_matpower_case(text: &str) -> Result<CaseDefinition> {
    let mut base_mva: Option<f64> = None;
    let mut bus = None;
    let mut gen = None;
    let mut branch = None;

    let mut current: Option<(String, Matrix, usize)> = None;
    for (lineno, raw) in text.lines().enumerate() {
        let lineno = lineno + 1;
        let line = raw.split('%').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some((_, mat, _)) = current.as_mut() {
            let (body, closes) = match line.find(']') {
                Some(p) => (&line[..p], true),
                None => (line, false),
            };
            for chunk in body.split(';') {
                let chunk = chunk.trim();
                if chunk.is_empty() {
                    continue;
                }
                let row = parse_row(chunk, lineno)?;
                mat.rows.push((lineno, row));
            }
            if closes {
                let (name, mat, _) = current.take().expect("matrix open");
                match name.as_str() {
                    "bus" => bus = Some(mat),
                    "gen" => gen = Some(mat),
                    "branch" => branch = Some(mat),
                    _ => {}
                }
            }
            continue;
        }
        let Some(eq) = line.find('=') else { continue };
        let lhs = line[..eq].trim();
        let rhs = line[eq + 1..].trim();
        let name = lhs.rsplit('.').next().unwrap_or(lhs).trim();
        if name == "baseMVA" {
            let v = rhs.trim_end_matches(';').trim();
            base_mva = Some(v.parse::<f64>().map_err(|_| Error::Parse {
                line: lineno,
                msg: format!("baseMVA is not a number: {v:?}"),
            })?);
        } else if let Some(rest) = rhs.strip_prefix('[') {
            let mut mat = Matrix { rows: Vec::new() };
            let (body, closes) = match rest.find(']') {
                Some(p) => (&rest[..p], true),
                None => (rest, false),
            };
            for chunk in body.split(';') {
                let chunk = chunk.trim();
                if !chunk.is_empty() {
                    mat.rows.push((lineno, parse_row(chunk, lineno)?));
                }
            }
            if closes {
                match name {
                    "bus" => bus = Some(mat),
                    "gen" => gen = Some(mat),
                    "branch" => branch = Some(mat),
                    _ => {}
                }
            } else {
                current = Some((name.to_string(), mat, lineno));
            }
        }
    }
    if let Some((name, _, line)) = current {
        return Err(Error::Parse {
            line,
            msg: format!("matrix `{name}` is never closed"),
        });
    }
    let base_mva = base_mva.ok_or(Error::Parse {
        line: 0,
        msg: "missing baseMVA".into(),
    })?;
    let bus = bus.ok_or(Error::Parse {
        line: 0,
        msg: "missing bus matrix".into(),
    })?;
    let gen = gen.unwrap_or(Matrix { rows: Vec::new() });
    let branch = branch.ok_or(Error::Parse {
        line: 0,
        msg: "missing branch matrix".into(),
    })?;
    if !(base_mva > 0.0) {
        return Err(Error::Semantic(format!(
            "base_mva must be positive, got {base_mva}"
        )));
    }

    let mut buses = Vec::with_capacity(bus.rows.len());
    for (line, r) in &bus.rows {
        need(r, 10, *line, "bus")?;
        let kind = match r[1] as i64 {
            3 => BusKind::Slack,
            2 => BusKind::PV,
            1 | 4 => BusKind::PQ,
            other => {
                return Err(Error::Parse {
                    line: *line,
                    msg: format!("unknown bus type {other}"),
                })
            }
        };
        buses.push(BusRecord {
            id: as_id(r[0], *line)?,
            kind,
            p_load: r[2],
            q_load: r[3],
            g_shunt: r[4] / base_mva,
            b_shunt: r[5] / base_mva,
            base_kv: r[9],
            vm0: r[7],
            va0: r[8],
        });
    }

    let mut machines = Vec::new();
    for (k, (line, r)) in gen.rows.iter().enumerate() {
        need(r, 8, *line, "gen")?;
        if r[7] <= 0.0 {
            continue;
        }
        machines.push(MachineParams {
            id: (k + 1) as u32,
            bus: as_id(r[0], *line)?,
            p_gen: r[1],
            q_gen: r[2],
            v_set: r[5],
            mbase: if r[6] > 0.0 { r[6] } else { base_mva },
            dynamics: None,
        });
    }

    let mut branches = Vec::with_capacity(branch.rows.len());
    for (k, (line, r)) in branch.rows.iter().enumerate() {
        need(r, 5, *line, "branch")?;
        let rate_a = r.get(5).copied().unwrap_or(0.0);
        let in_service = r.get(10).map_or(true, |s| *s > 0.0);
        branches.push(BranchRecord {
            id: (k + 1) as u32,
            from_bus: as_id(r[0], *line)?,
            to_bus: as_id(r[1], *line)?,
            r: r[2],
            x: r[3],
            b_charging: r[4],
            current_limit: if rate_a > 0.0 {
                rate_a / base_mva
            } else {
                UNRATED_LIMIT
            },
            status: if in_service {
                BranchStatus::In
            } else {
                BranchStatus::Out
            },
        });
    }

    let case = CaseDefinition {
        version: NATIVE_FORMAT_VERSION,
        base_mva,
        f_nominal: 60.0,
        buses,
        branches,
        machines,
        relays: RelayConfig::default(),
    };
    case.validate()?;
    Ok(case)
}

fn parse_row(chunk: &str, line: usize) -> Result<Vec<f64>> {
    chunk
        .split(|c: char| c.is_whitespace() || c == ',')
        .filter(|s| !s.is_empty())
        .map(|tok| {
            tok.parse::<f64>().map_err(|_| Error::Parse {
                line,
                msg: format!("not a number: {tok:?}"),
            })
        })
        .collect()
}

fn need(row: &[f64], n: usize, line: usize, what: &str) -> Result<()> {
    if row.len() < n {
        return Err(Error::Parse {
            line,
            msg: format!(
                "{what} row has {} columns, expected at least {n}",
                row.len()
            ),
        });
    }
    Ok(())
}

fn as_id(v: f64, line: usize) -> Result<u32> {
    if v.fract() != 0.0 || v < 0.0 || v > u32::MAX as f64 {
        return Err(Error::Parse {
            line,
            msg: format!("invalid id {v}"),
        });
    }
    Ok(v as u32)
}
