//! Parameter points, their evaluation and the CSV table.

use std::f64::consts::{FRAC_PI_2, TAU};
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use timebin_repeater::optics::{ChannelParams, DetectorParams, NoiseParams};
use timebin_repeater::protocol::{
    chain_connect, decompose_timebins, propagate_to_midpoint, simulate_link, write_node,
    HeraldPattern, HeraldedLink, LinkConfig, NodeConfig, QubitId, SwapConfig, MIDPOINT_GATE,
};
use timebin_repeater::Error as SimError;

use crate::config::{check_param, Command, Param, RunConfig};
use crate::error::Result;

/// One fully specified simulation input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub chi: f64,
    pub eta: f64,
    pub retrieval_eta: f64,
    pub l0: f64,
    pub latt: f64,
    pub theta_a: f64,
    pub phi_a: f64,
    pub theta_b: f64,
    pub phi_b: f64,
    /// Polarization-independent fibre phases; zero unless sampled.
    pub path_a: f64,
    pub path_b: f64,
}

impl Point {
    fn set(&mut self, param: Param, v: f64) {
        match param {
            Param::Chi => self.chi = v,
            Param::Eta => self.eta = v,
            Param::RetrievalEta => self.retrieval_eta = v,
            Param::L0 => self.l0 = v,
            Param::Latt => self.latt = v,
            Param::ThetaA => self.theta_a = v,
            Param::PhiA => self.phi_a = v,
            Param::ThetaB => self.theta_b = v,
            Param::PhiB => self.phi_b = v,
        }
    }

    pub fn link(&self, left: QubitId, right: QubitId, cap: u32) -> Result<LinkConfig> {
        let node = |q| Ok::<_, SimError>(NodeConfig::new(q, self.chi)?.with_cap(cap / 2));
        Ok(LinkConfig {
            left: node(left)?,
            right: node(right)?,
            channel_left: ChannelParams::new(
                self.l0,
                self.latt,
                NoiseParams::new(self.theta_a, self.phi_a, self.path_a),
            )?,
            channel_right: ChannelParams::new(
                self.l0,
                self.latt,
                NoiseParams::new(self.theta_b, self.phi_b, self.path_b),
            )?,
            detector: DetectorParams::new(self.eta, MIDPOINT_GATE, false)?,
        })
    }
}

/// Random-noise stream for one point: the seed picks the generator, the
/// point index picks the stream, so results do not depend on scheduling.
pub fn point_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Expands grids (first grid outermost) and random draws into points.
pub fn points(cfg: &RunConfig) -> Vec<Point> {
    let base = Point {
        chi: cfg.chi,
        eta: cfg.eta,
        retrieval_eta: cfg.retrieval_eta,
        l0: cfg.l0,
        latt: cfg.latt,
        theta_a: cfg.theta_a,
        phi_a: cfg.phi_a,
        theta_b: f64::NAN,
        phi_b: f64::NAN,
        path_a: 0.0,
        path_b: 0.0,
    };
    let mut combos = vec![base];
    for g in &cfg.grids {
        combos = combos
            .into_iter()
            .flat_map(|p| {
                g.values().into_iter().map(move |v| {
                    let mut q = p;
                    q.set(g.param, v);
                    q
                })
            })
            .collect();
    }
    // unset right-hand noise follows the left-hand value
    let b_theta_given = cfg.theta_b.is_some() || cfg.grid(Param::ThetaB).is_some();
    let b_phi_given = cfg.phi_b.is_some() || cfg.grid(Param::PhiB).is_some();
    for p in &mut combos {
        if !b_theta_given {
            p.theta_b = p.theta_a;
        } else if cfg.grid(Param::ThetaB).is_none() {
            p.theta_b = cfg.theta_b.unwrap_or(p.theta_a);
        }
        if !b_phi_given {
            p.phi_b = p.phi_a;
        } else if cfg.grid(Param::PhiB).is_none() {
            p.phi_b = cfg.phi_b.unwrap_or(p.phi_a);
        }
    }

    let Some(n) = cfg.samples else {
        return combos;
    };
    let mut out = Vec::with_capacity(combos.len() * n);
    for (k, p) in combos.iter().enumerate() {
        for s in 0..n {
            let mut rng = point_rng(cfg.seed, (k * n + s) as u64);
            out.push(Point {
                theta_a: rng.gen::<f64>() * FRAC_PI_2,
                phi_a: rng.gen::<f64>() * TAU,
                theta_b: rng.gen::<f64>() * FRAC_PI_2,
                phi_b: rng.gen::<f64>() * TAU,
                path_a: rng.gen::<f64>() * TAU,
                path_b: rng.gen::<f64>() * TAU,
                ..*p
            });
        }
    }
    out
}

/// One output line: the inputs plus whichever metrics the command produces.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub theta_a: f64,
    pub phi_a: f64,
    pub theta_b: f64,
    pub phi_b: f64,
    pub chi: f64,
    pub eta: f64,
    pub retrieval_eta: f64,
    pub l0: f64,
    pub latt: f64,
    /// Leading-order probability that a link attempt heralds (any pattern).
    pub p_succ: Option<f64>,
    /// Fidelity of the normalized Bell component of the heralded link.
    pub bell_fidelity: Option<f64>,
    pub postselected_fidelity: Option<f64>,
    pub p2: Option<f64>,
    pub p1: Option<f64>,
    pub p0: Option<f64>,
}

pub const HEADER: [&str; 15] = [
    "theta_a",
    "phi_a",
    "theta_b",
    "phi_b",
    "chi",
    "eta",
    "retrieval_eta",
    "L0",
    "Latt",
    "p_succ",
    "bell_fidelity",
    "postselected_fidelity",
    "p2",
    "p1",
    "p0",
];

fn fmt_value(v: f64) -> String {
    format!("{v:.11e}")
}

impl ResultRow {
    fn inputs(p: &Point) -> Self {
        ResultRow {
            theta_a: p.theta_a,
            phi_a: p.phi_a,
            theta_b: p.theta_b,
            phi_b: p.phi_b,
            chi: p.chi,
            eta: p.eta,
            retrieval_eta: p.retrieval_eta,
            l0: p.l0,
            latt: p.latt,
            p_succ: None,
            bell_fidelity: None,
            postselected_fidelity: None,
            p2: None,
            p1: None,
            p0: None,
        }
    }

    /// Value of a column by its header name.
    pub fn value(&self, column: &str) -> Option<f64> {
        Some(match column {
            "theta_a" => self.theta_a,
            "phi_a" => self.phi_a,
            "theta_b" => self.theta_b,
            "phi_b" => self.phi_b,
            "chi" => self.chi,
            "eta" => self.eta,
            "retrieval_eta" => self.retrieval_eta,
            "L0" => self.l0,
            "Latt" => self.latt,
            "p_succ" => return self.p_succ,
            "bell_fidelity" => return self.bell_fidelity,
            "postselected_fidelity" => return self.postselected_fidelity,
            "p2" => return self.p2,
            "p1" => return self.p1,
            "p0" => return self.p0,
            _ => return None,
        })
    }

    pub fn record(&self) -> Vec<String> {
        HEADER
            .iter()
            .map(|c| self.value(c).map(fmt_value).unwrap_or_default())
            .collect()
    }
}

pub fn write_csv<W: Write>(rows: &[ResultRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(HEADER)?;
    for r in rows {
        w.write_record(r.record())?;
    }
    w.flush()?;
    Ok(())
}

/// Turns "nothing heralded" into a missing metric and passes other errors on.
fn optional<T>(r: timebin_repeater::Result<T>) -> Result<Option<T>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(SimError::NoHeraldEvents | SimError::EmptyPostSelection) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

fn chain_links(p: &Point, segments: usize, cap: u32) -> Result<Option<Vec<HeraldedLink>>> {
    let mut links = Vec::with_capacity(segments);
    for k in 0..segments {
        let cfg = p.link(
            QubitId::new(format!("S{k}"), "R"),
            QubitId::new(format!("S{}", k + 1), "L"),
            cap,
        )?;
        match optional(simulate_link(&cfg)?.herald(HeraldPattern::D1D3))? {
            Some(l) => links.push(l),
            None => return Ok(None),
        }
    }
    Ok(Some(links))
}

pub fn evaluate(p: &Point, cfg: &RunConfig) -> Result<ResultRow> {
    for (param, v) in [
        (Param::Chi, p.chi),
        (Param::Eta, p.eta),
        (Param::RetrievalEta, p.retrieval_eta),
        (Param::L0, p.l0),
        (Param::Latt, p.latt),
    ] {
        check_param(param, v)?;
    }
    let mut row = ResultRow::inputs(p);
    if cfg.command == Command::Decompose {
        return Ok(row);
    }

    let sim = simulate_link(&p.link(QubitId::end("A"), QubitId::end("B"), cfg.cap)?)?;
    row.p_succ = Some(sim.leading_success_probability());
    row.bell_fidelity = optional(sim.herald(HeraldPattern::D1D3))?
        .map(|l| l.bell_sector_fidelity())
        .transpose()?;

    let segments = match cfg.command {
        Command::Swap => 2,
        Command::Chain | Command::Sweep => cfg.segments,
        _ => return Ok(row),
    };
    let Some(links) = chain_links(p, segments, cfg.cap)? else {
        return Ok(row);
    };
    let swap = SwapConfig::new(p.retrieval_eta, p.eta)?;
    if let Some(r) = optional(chain_connect(&links, swap))? {
        row.p2 = Some(r.p2);
        row.p1 = Some(r.p1);
        row.p0 = Some(r.p0);
        row.postselected_fidelity = optional(r.postselected_fidelity())?;
    }
    Ok(row)
}

/// Evaluates every point in parallel; rows come back in point order.
pub fn run_sweep(cfg: &RunConfig) -> Result<Vec<ResultRow>> {
    points(cfg).par_iter().map(|p| evaluate(p, cfg)).collect()
}

/// Squared norms of the time-bin sectors of one node after the midpoint
/// optics (lossless branch), for the first point of the configuration.
pub fn decompose_summary(cfg: &RunConfig) -> Result<Vec<(String, f64)>> {
    let p = points(cfg)[0];
    let q = QubitId::end("A");
    let node = NodeConfig::new(q.clone(), p.chi)?.with_cap(cfg.cap / 2);
    let channel = ChannelParams::lossless(NoiseParams::new(p.theta_a, p.phi_a, p.path_a));
    let branches = propagate_to_midpoint(&write_node(&node)?, &channel, &q)?;
    let state = branches[0].unnormalized_state();
    let s = decompose_timebins(&state);
    let total = state.norm_sqr();
    Ok(vec![
        ("sector.vacuum".into(), s.vacuum.norm_sqr() / total),
        ("sector.bin1".into(), s.bin1.norm_sqr() / total),
        ("sector.bins02".into(), s.bins02.norm_sqr() / total),
        ("sector.cross".into(), s.cross.norm_sqr() / total),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_metrics_are_blank_fields() {
        let mut cfg = RunConfig::new(Command::Decompose);
        cfg.grids.clear();
        let rows = run_sweep(&cfg).unwrap();
        assert_eq!(rows.len(), 1);
        let rec = rows[0].record();
        assert_eq!(rec.len(), 15);
        assert_eq!(rec[4], "1.00000000000e-2");
        assert!(rec[9..].iter().all(String::is_empty));
    }

    #[test]
    fn right_noise_follows_left_unless_given() {
        let mut cfg = RunConfig::new(Command::Generate);
        cfg.theta_a = 0.3;
        assert_eq!(points(&cfg)[0].theta_b, 0.3);
        cfg.theta_b = Some(0.1);
        assert_eq!(points(&cfg)[0].theta_b, 0.1);
    }

    #[test]
    fn sampled_points_are_reproducible_and_in_range() {
        let mut cfg = RunConfig::new(Command::Generate);
        cfg.samples = Some(50);
        cfg.seed = 9;
        let a = points(&cfg);
        assert_eq!(a, points(&cfg));
        assert!(a.iter().all(|p| (0.0..=FRAC_PI_2).contains(&p.theta_a) && (0.0..TAU).contains(&p.phi_b)));
        cfg.seed = 10;
        assert_ne!(a, points(&cfg));
    }
}
