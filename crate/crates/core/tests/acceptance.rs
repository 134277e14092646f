//! Acceptance criteria 1–10. Prints one line per criterion and exits nonzero
//! if any criterion fails. Set `IBP_ACCEPTANCE=3,7` to run a subset and
//! `IBP_VERBOSE=1` to print every check.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use ibp_core::buffet::pair::{logarithmic_pmf, sibuya_pmf};
use ibp_core::verify::checks::{self, finalize, CheckRecord};
use ibp_core::Result;

const SEED: u64 = 20240611;

struct Criterion {
    id: u32,
    title: &'static str,
    limit: Option<Duration>,
    run: fn() -> Result<Vec<CheckRecord>>,
}

fn c1() -> Result<Vec<CheckRecord>> {
    checks::ibp_new_dish_counts(SEED, 20_000)
}

fn c2() -> Result<Vec<CheckRecord>> {
    checks::closed_form_exponents()
}

fn c3() -> Result<Vec<CheckRecord>> {
    checks::gamma_poisson_totals(SEED + 3, 100_000)
}

fn c4() -> Result<Vec<CheckRecord>> {
    let mut out = vec![
        CheckRecord::exact("Sibuya(0.5) P(X=1) = 0.5 exactly", sibuya_pmf(0.5, 1) == 0.5, "bitwise"),
        CheckRecord::exact("Sibuya(0.5) P(X=2) = 0.125 exactly", sibuya_pmf(0.5, 2) == 0.125, "bitwise"),
    ];
    out.push(CheckRecord::abs_error(
        "Logarithmic(b=1) P(X=1) = 1/(2 ln 2)",
        logarithmic_pmf(0.5, 1),
        1.0 / (2.0 * std::f64::consts::LN_2),
        1e-12,
    ));
    out.extend(checks::pair_pmfs(SEED + 4, 100_000)?);
    Ok(out)
}

fn c5() -> Result<Vec<CheckRecord>> {
    checks::take_probability(SEED + 5, 100_000)
}

fn c6() -> Result<Vec<CheckRecord>> {
    checks::marginal_coherence(SEED + 6, 1_000_000)
}

fn c7() -> Result<Vec<CheckRecord>> {
    checks::explosivity()
}

fn c8() -> Result<Vec<CheckRecord>> {
    checks::oracle_equivalence(SEED + 8, 100_000, 1e-5)
}

fn c9() -> Result<Vec<CheckRecord>> {
    checks::multivar_collapse(SEED + 9, 100_000)
}

fn c10() -> Result<Vec<CheckRecord>> {
    checks::transform_round_trip()
}

fn main() -> ExitCode {
    let criteria = [
        Criterion { id: 1, title: "original IBP recovery", limit: Some(Duration::from_secs(30)), run: c1 },
        Criterion { id: 2, title: "closed-form exponents", limit: Some(Duration::from_secs(5)), run: c2 },
        Criterion { id: 3, title: "gamma-Poisson totals", limit: Some(Duration::from_secs(60)), run: c3 },
        Criterion { id: 4, title: "pair-sampler pmfs", limit: None, run: c4 },
        Criterion { id: 5, title: "predictive take probability", limit: None, run: c5 },
        Criterion { id: 6, title: "marginal coherence", limit: Some(Duration::from_secs(300)), run: c6 },
        Criterion { id: 7, title: "explosivity", limit: None, run: c7 },
        Criterion { id: 8, title: "oracle equivalence", limit: Some(Duration::from_secs(120)), run: c8 },
        Criterion { id: 9, title: "multivariate collapse", limit: None, run: c9 },
        Criterion { id: 10, title: "transform round trip", limit: None, run: c10 },
    ];
    let only: Option<Vec<u32>> = std::env::var("IBP_ACCEPTANCE")
        .ok()
        .map(|v| v.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let verbose = std::env::var_os("IBP_VERBOSE").is_some();
    let mut all_pass = true;
    let mut lines = Vec::new();
    for c in criteria.iter().filter(|c| only.as_ref().is_none_or(|o| o.contains(&c.id))) {
        let t0 = Instant::now();
        let res = (c.run)();
        let took = t0.elapsed();
        let (pass, detail) = match res {
            Ok(mut recs) => {
                finalize(&mut recs);
                let failed: Vec<&CheckRecord> = recs.iter().filter(|r| !r.pass).collect();
                if verbose {
                    for r in &recs {
                        println!("    {} {}", if r.pass { "ok  " } else { "FAIL" }, serde_json::to_string(r).unwrap_or_default());
                    }
                }
                for r in &failed {
                    println!(
                        "    criterion {} failing check: {} ({:?} value {:.4e}, threshold {:.1e}{})",
                        c.id,
                        r.name,
                        r.measure,
                        r.value,
                        r.threshold,
                        r.note.as_ref().map(|n| format!(", {n}")).unwrap_or_default()
                    );
                }
                (failed.is_empty(), format!("{}/{} checks", recs.len() - failed.len(), recs.len()))
            }
            Err(e) => (false, format!("error: {e}")),
        };
        let in_time = c.limit.is_none_or(|l| took <= l);
        let limit = c.limit.map(|l| format!(" (limit {}s)", l.as_secs())).unwrap_or_default();
        let ok = pass && in_time;
        all_pass &= ok;
        let line = format!(
            "criterion {:>2} {:<28} {}  {detail}, {:.1}s{limit}{}",
            c.id,
            c.title,
            if ok { "PASS" } else { "FAIL" },
            took.as_secs_f64(),
            if pass && !in_time { " over time limit" } else { "" }
        );
        println!("{line}");
        lines.push(line);
    }
    println!("\nacceptance summary");
    for l in &lines {
        println!("{l}");
    }
    if all_pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
