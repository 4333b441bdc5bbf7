//! Side-by-side metrics for several compilations of one program, with a
//! delta for every ordered pair (later minus earlier).

use serde::Serialize;

use super::CompilationResult;
use crate::heuristics::ComboName;
use crate::metrics::MetricsReport;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum CompareError {
    #[error("nothing to compare")]
    Empty,
    #[error("results come from different programs or inputs ({0} vs {1})")]
    MixedSource(ComboName, ComboName),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Delta {
    pub from: ComboName,
    pub to: ComboName,
    pub memory_avg: f64,
    pub memory_worst: i64,
    pub code_growth_pct: f64,
    pub unit_count: i64,
    pub unit_avg_size: f64,
    pub profile_variance: f64,
    pub pct_invariant_units: f64,
    pub pct_interprocedural_ops: f64,
    pub dynamic_cost: i64,
}

impl Delta {
    fn between(a: &MetricsReport, b: &MetricsReport) -> Delta {
        Delta {
            from: a.strategy,
            to: b.strategy,
            memory_avg: b.memory_avg - a.memory_avg,
            memory_worst: b.memory_worst as i64 - a.memory_worst as i64,
            code_growth_pct: b.code_growth_pct - a.code_growth_pct,
            unit_count: b.unit_count as i64 - a.unit_count as i64,
            unit_avg_size: b.unit_avg_size - a.unit_avg_size,
            profile_variance: b.profile_variance - a.profile_variance,
            pct_invariant_units: b.pct_invariant_units - a.pct_invariant_units,
            pct_interprocedural_ops: b.pct_interprocedural_ops - a.pct_interprocedural_ops,
            dynamic_cost: b.dynamic_cost as i64 - a.dynamic_cost as i64,
        }
    }

    fn values(&self) -> Vec<String> {
        vec![
            format!("{}-{}", self.to, self.from),
            format!("{:+.1}", self.memory_avg),
            format!("{:+}", self.memory_worst),
            format!("{:+.2}", self.code_growth_pct),
            format!("{:+}", self.unit_count),
            format!("{:+.2}", self.unit_avg_size),
            format!("{:+.4}", self.profile_variance),
            format!("{:+.1}", self.pct_invariant_units),
            format!("{:+.2}", self.pct_interprocedural_ops),
            format!("{:+}", self.dynamic_cost),
        ]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComparisonTable {
    pub rows: Vec<MetricsReport>,
    pub deltas: Vec<Delta>,
}

pub fn compare(results: &[CompilationResult]) -> Result<ComparisonTable, CompareError> {
    let first = results.first().ok_or(CompareError::Empty)?;
    for r in &results[1..] {
        if r.source != first.source || r.input != first.input {
            return Err(CompareError::MixedSource(first.combo.name, r.combo.name));
        }
    }
    let rows: Vec<MetricsReport> = results.iter().map(|r| r.report.clone()).collect();
    let mut deltas = Vec::new();
    for i in 0..rows.len() {
        for j in i + 1..rows.len() {
            deltas.push(Delta::between(&rows[i], &rows[j]));
        }
    }
    Ok(ComparisonTable { rows, deltas })
}

impl ComparisonTable {
    fn lines(&self) -> Vec<Vec<String>> {
        let mut out = vec![MetricsReport::COLUMNS.iter().map(|c| c.to_string()).collect::<Vec<_>>()];
        out.extend(self.rows.iter().map(MetricsReport::values));
        out.extend(self.deltas.iter().map(Delta::values));
        out
    }

    /// Columns padded to a common width, one line per row.
    pub fn to_table(&self) -> String {
        let lines = self.lines();
        let widths: Vec<usize> = (0..MetricsReport::COLUMNS.len())
            .map(|c| lines.iter().map(|l| l[c].len()).max().unwrap_or(0))
            .collect();
        let mut s = String::new();
        for l in &lines {
            let cells: Vec<String> = l.iter().zip(&widths).map(|(v, w)| format!("{v:>w$}")).collect();
            s += cells.join("  ").trim_end();
            s.push('\n');
        }
        s
    }

    pub fn to_csv(&self) -> String {
        self.lines().iter().map(|l| l.join(",") + "\n").collect()
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("table serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::heuristics::HeuristicCombo;
    use crate::ir::parse_program;
    use crate::pipeline::compile;
    use crate::region::RegionParams;

    const F_CALLS_G: &str = include_str!("../../fixtures/f_calls_g.ir");

    fn run(name: ComboName, input: i64) -> CompilationResult {
        let p = parse_program(F_CALLS_G).unwrap();
        compile(&p, &[input], &HeuristicCombo::new(name), &RegionParams::default()).unwrap()
    }

    #[test]
    fn identical_results_have_zero_deltas() {
        let r = run(ComboName::H1, 2);
        let t = compare(&[r.clone(), r]).unwrap();
        let d = &t.deltas[0];
        assert_eq!((d.code_growth_pct, d.unit_count, d.dynamic_cost, d.memory_worst), (0.0, 0, 0, 0));
    }

    #[test]
    fn h0_vs_h1_growth() {
        let t = compare(&[run(ComboName::H0, 2), run(ComboName::H1, 2)]).unwrap();
        assert_eq!(t.rows[0].code_growth_pct, 0.0);
        assert!(t.rows[1].code_growth_pct > 0.0);
        assert_eq!(t.deltas[0].code_growth_pct, t.rows[1].code_growth_pct - t.rows[0].code_growth_pct);
        assert_eq!(t.to_csv().lines().count(), 4);
        assert!(t.to_table().contains("H1-H0"));
    }

    #[test]
    fn mixed_inputs_are_rejected() {
        assert!(matches!(compare(&[]), Err(CompareError::Empty)));
        let p = parse_program("proc main(a) {\nblock 1:\n  print a\n  return a\n}\n").unwrap();
        let c = HeuristicCombo::new(ComboName::H0);
        let a = compile(&p, &[1], &c, &RegionParams::default()).unwrap();
        let b = compile(&p, &[2], &c, &RegionParams::default()).unwrap();
        assert_eq!(compare(&[a, b]), Err(CompareError::MixedSource(ComboName::H0, ComboName::H0)));
    }
}
