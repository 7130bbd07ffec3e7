//! Bioreactor-scale cell culture model: growth, death, metabolite uptake and
//! production, and the extracellular mAb/glycoform balances.

use serde::{Deserialize, Serialize};

use crate::network::{GlycoformGroups, ParameterPack};
use crate::{Error, Result};

/// Metabolite ordering used across the crate.
pub const METABOLITES: [&str; 9] = [
    "Glc", "Gln", "Lac", "Amm", "Glu", "Gal", "Urd", "Asn", "Asp",
];

pub const GLC: usize = 0;
pub const GLN: usize = 1;
pub const LAC: usize = 2;
pub const AMM: usize = 3;
pub const GLU: usize = 4;
pub const GAL: usize = 5;
pub const URD: usize = 6;
pub const ASN: usize = 7;
pub const ASP: usize = 8;

/// Extracellular state of the reactor.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReactorState {
    /// Working volume (L).
    pub v: f64,
    /// Total cell density (cells / L).
    pub x: f64,
    /// Viable cell density (cells / L).
    pub xv: f64,
    /// Metabolite concentrations (mmol / L), ordered per [`METABOLITES`].
    pub met: [f64; 9],
    /// Product concentration (mg / L).
    pub mab: f64,
    /// Extracellular glycoform concentrations (mg / L), one per tracked group
    /// plus a trailing "other" bucket.
    pub gly: Vec<f64>,
}

impl ReactorState {
    pub fn viability(&self) -> f64 {
        if self.x <= 0.0 {
            1.0
        } else {
            self.xv / self.x
        }
    }

    pub fn viability_pct(&self) -> f64 {
        100.0 * self.viability()
    }
}

/// Feed conditions at an instant: per-stream flows and compositions.
#[derive(Debug, Clone, Default)]
pub struct FeedInput {
    /// (flow L/h, composition mmol/L per metabolite) per active stream.
    pub streams: Vec<(f64, [f64; 9])>,
    /// Outlet flow (L/h); zero in fed-batch until harvest.
    pub f_out: f64,
}

impl FeedInput {
    pub fn f_in_total(&self) -> f64 {
        self.streams.iter().map(|(f, _)| f).sum()
    }

    /// Metabolite inflow Sum_s F_s * c_in_s (mmol / h).
    pub fn inflow(&self) -> [f64; 9] {
        let mut out = [0.0; 9];
        for (f, c) in &self.streams {
            for i in 0..9 {
                out[i] += f * c[i];
            }
        }
        out
    }
}

/// Natural-space cell culture parameters pulled out of a pack.
#[derive(Debug, Clone)]
pub struct CcParams {
    pub mu_max: f64,
    pub mu_death_max: f64,
    pub k_glc: f64,
    pub k_gal: f64,
    pub k_urd: f64,
    pub k_asn: f64,
    pub ki_amm: f64,
    pub ki_lac: f64,
    pub ki_urd: f64,
    pub kd_amm: f64,
    pub kd_urd: f64,
    pub y_mab_x: f64,
    pub m_mab: f64,
    pub y_x_glc: f64,
    pub y_x_gln: f64,
    pub y_x_lac: f64,
    pub y_x_amm: f64,
    pub y_x_glu: f64,
    pub y_x_gal: f64,
    pub y_x_urd: f64,
    pub y_x_asn: f64,
    pub y_x_asp: f64,
    pub m_glc: f64,
    pub m_lac: f64,
    pub k_c_gal: f64,
    pub f_gal: f64,
    pub lac_max1: f64,
    pub lac_max2: f64,
    pub y_gln_amm: f64,
    pub y_asn_asp: f64,
    pub y_asp_asn: f64,
    pub y_amm_urd: f64,
    pub y_lac_glc: f64,
}

impl CcParams {
    pub fn from_pack(pack: &ParameterPack) -> Result<Self> {
        let g = |n: &str| pack.natural(n);
        Ok(CcParams {
            mu_max: g("mu_max")?,
            mu_death_max: g("mu_death_max")?,
            k_glc: g("K_Glc")?,
            k_gal: g("K_Gal")?,
            k_urd: g("K_Urd")?,
            k_asn: g("K_Asn")?,
            ki_amm: g("KI_Amm")?,
            ki_lac: pack.constants.scalar("KI_Lac_mM"),
            ki_urd: g("KI_Urd")?,
            kd_amm: g("Kd_Amm")?,
            kd_urd: g("Kd_Urd")?,
            y_mab_x: g("Y_mAb_X")?,
            m_mab: g("m_mAb")?,
            y_x_glc: g("Y_X_Glc")?,
            y_x_gln: g("Y_X_Gln")?,
            y_x_lac: g("Y_X_Lac")?,
            y_x_amm: g("Y_X_Amm")?,
            y_x_glu: g("Y_X_Glu")?,
            y_x_gal: g("Y_X_Gal")?,
            y_x_urd: g("Y_X_Urd")?,
            y_x_asn: g("Y_X_Asn")?,
            y_x_asp: pack.constants.scalar("Y_X_Asp"),
            m_glc: g("m_Glc")?,
            m_lac: g("m_Lac")?,
            k_c_gal: g("K_C_Gal")?,
            f_gal: g("f_Gal")?,
            lac_max1: g("Lac_max1")?,
            lac_max2: g("Lac_max2")?,
            y_gln_amm: g("Y_Gln_Amm")?,
            y_asn_asp: g("Y_Asn_Asp")?,
            y_asp_asn: pack.constants.scalar("Y_Asp_Asn"),
            y_amm_urd: g("Y_Amm_Urd")?,
            y_lac_glc: pack.constants.scalar("Y_Lac_Glc"),
        })
    }
}

/// Specific production/consumption rates. Units: mmol cell^-1 h^-1, except
/// mAb in pg cell^-1 h^-1.
#[derive(Debug, Clone, Copy, Default)]
pub struct SpecificRates {
    pub glc: f64,
    pub gln: f64,
    pub lac: f64,
    pub amm: f64,
    pub glu: f64,
    pub gal: f64,
    pub urd: f64,
    pub asn: f64,
    pub asp: f64,
    pub mab: f64,
}

impl SpecificRates {
    pub fn by_metabolite(&self) -> [f64; 9] {
        [
            self.glc, self.gln, self.lac, self.amm, self.glu, self.gal, self.urd, self.asn,
            self.asp,
        ]
    }
}

/// Growth and death rates with their limiting/inhibiting factors.
pub fn growth_death_rates(state: &ReactorState, p: &CcParams) -> Result<(f64, f64, f64, f64)> {
    for (i, c) in state.met.iter().enumerate() {
        if !c.is_finite() || *c < 0.0 {
            return Err(Error::Domain(format!(
                "negative or non-finite concentration for {}",
                METABOLITES[i]
            )));
        }
    }
    let glc = state.met[GLC];
    let asn = state.met[ASN];
    let amm = state.met[AMM];
    let lac = state.met[LAC];
    let urd = state.met[URD];

    let f_lim = glc / (glc + p.k_glc) * (asn / (asn + p.k_asn));
    let f_inh = p.ki_amm / (amm + p.ki_amm) * (p.ki_lac / (lac + p.ki_lac))
        * (p.ki_urd / (urd + p.ki_urd));
    let mu = p.mu_max * f_lim * f_inh;
    let mu_death =
        p.mu_death_max * (amm / (amm + p.kd_amm) + urd / (urd + p.kd_urd));
    Ok((mu, mu_death, f_lim, f_inh))
}

/// Solve the implicit glucose-uptake relation. The galactose-repression
/// exponent depends on q_Glc itself, so the scalar fixed point is solved with
/// a safeguarded bracketing iteration and the residual is checked.
fn solve_q_glc(base: f64, factor: f64, f_gal: f64, q_gal: f64) -> Result<f64> {
    if q_gal == 0.0 || factor == 1.0 {
        return Ok(base * factor);
    }
    let g = |x: f64| -> f64 {
        let n = 1.0 - f_gal * q_gal / x;
        base * factor.powf(n)
    };
    // bracket: h(x) = x - g(x); h -> +inf as x -> 0-, h -> x - base*factor as x -> -inf
    let mut hi = -1e-30_f64.max(base.abs() * 1e-12);
    let mut lo = base.min(base * factor) * 4.0;
    let mut h_lo = lo - g(lo);
    let mut tries = 0;
    while h_lo > 0.0 {
        lo *= 8.0;
        h_lo = lo - g(lo);
        tries += 1;
        if tries > 60 {
            return Err(Error::Domain("q_Glc fixed point cannot be bracketed".into()));
        }
    }
    let mut h_hi = hi - g(hi);
    if h_hi < 0.0 {
        // fall back to the saturation limit if the near-zero side is negative
        hi = -f64::MIN_POSITIVE;
        h_hi = hi - g(hi);
        if h_hi < 0.0 {
            return Err(Error::Domain("q_Glc fixed point lost its bracket".into()));
        }
    }
    let mut x = 0.5 * (lo + hi);
    for _ in 0..200 {
        let h = x - g(x);
        if h.abs() <= 1e-12 * x.abs().max(1e-300) {
            break;
        }
        if h > 0.0 {
            hi = x;
            let _ = h_hi;
            h_hi = h;
        } else {
            lo = x;
            h_lo = h;
        }
        // secant proposal, safeguarded by bisection
        let sec = hi - h_hi * (hi - lo) / (h_hi - h_lo);
        x = if sec.is_finite() && sec > lo && sec < hi {
            sec
        } else {
            0.5 * (lo + hi)
        };
    }
    let res = (x - g(x)).abs();
    if res > 1e-10 * x.abs().max(1e-30) {
        return Err(Error::Domain(format!(
            "q_Glc fixed point residual {res:.3e} too large"
        )));
    }
    Ok(x)
}

/// All ten specific rates. The (q_Asn, q_Asp) pair is a 2x2 linear system
/// solved in closed form; (q_Glc, n_Gal) is an implicit scalar relation.
pub fn specific_rates(state: &ReactorState, mu: f64, p: &CcParams) -> Result<SpecificRates> {
    let gal = state.met[GAL];
    let urd = state.met[URD];
    let lac = state.met[LAC];

    let q_gal = -(mu / p.y_x_gal) * gal / (gal + p.k_gal);
    let q_urd = (mu / p.y_x_urd) * urd / (urd + p.k_urd);
    let q_glu = -(mu / p.y_x_glu);
    let q_mab = p.y_mab_x * mu + p.m_mab;

    let base = -(mu / p.y_x_glc) - p.m_glc;
    let factor = p.k_c_gal / (p.k_c_gal + gal);
    let q_glc = solve_q_glc(base, factor, p.f_gal, q_gal)?;

    let q_lac = (mu / p.y_x_lac - p.y_lac_glc * q_glc) * (p.lac_max1 - lac) / p.lac_max1
        + p.m_lac * (p.lac_max2 - lac) / p.lac_max2;

    let q_amm = mu / p.y_x_amm - p.y_amm_urd * q_urd;
    let q_gln = mu / p.y_x_gln + q_amm * p.y_gln_amm;

    let det = 1.0 - p.y_asn_asp * p.y_asp_asn;
    if det.abs() < 1e-12 {
        return Err(Error::Domain(
            "degenerate Asn/Asp coupling: 1 - Y_Asn/Asp * Y_Asp/Asn = 0".into(),
        ));
    }
    let q_asn = (-(mu / p.y_x_asn) + p.y_asn_asp * mu / p.y_x_asp) / det;
    let q_asp = -(mu / p.y_x_asp) - p.y_asp_asn * q_asn;

    Ok(SpecificRates {
        glc: q_glc,
        gln: q_gln,
        lac: q_lac,
        amm: q_amm,
        glu: q_glu,
        gal: q_gal,
        urd: q_urd,
        asn: q_asn,
        asp: q_asp,
        mab: q_mab,
    })
}

/// Time derivative of the reactor state. `y_intra` holds the intracellular
/// glycoform fractions in the same order as `state.gly`.
pub fn cellculture_rhs(
    state: &ReactorState,
    feed: &FeedInput,
    p: &CcParams,
    y_intra: &[f64],
) -> Result<ReactorState> {
    let (mu, mu_death, _, _) = growth_death_rates(state, p)?;
    let q = specific_rates(state, mu, p)?;
    Ok(cellculture_rhs_with_rates(state, feed, mu, mu_death, &q, y_intra))
}

/// Same as [`cellculture_rhs`] but with precomputed rates (the integrator
/// evaluates mu/q once per RHS call and reuses them for the NSD coupling).
pub fn cellculture_rhs_with_rates(
    state: &ReactorState,
    feed: &FeedInput,
    mu: f64,
    mu_death: f64,
    q: &SpecificRates,
    y_intra: &[f64],
) -> ReactorState {
    let f_in = feed.f_in_total();
    let inflow = feed.inflow();
    let v = state.v;
    let dv = f_in - feed.f_out;
    let dx = mu * state.xv - state.x * f_in / v;
    let dxv = (mu - mu_death) * state.xv - state.xv * f_in / v;

    let qm = q.by_metabolite();
    let mut dmet = [0.0; 9];
    for i in 0..9 {
        dmet[i] = inflow[i] / v - state.met[i] * f_in / v + qm[i] * state.xv;
    }

    // q_mAb is pg cell^-1 h^-1 and concentrations are mg/L: 1e-9 mg per pg
    let prod = q.mab * state.xv * 1.0e-9;
    let dmab = prod - state.mab * f_in / v;
    let dgly: Vec<f64> = state
        .gly
        .iter()
        .zip(y_intra)
        .map(|(c, y)| prod * y - c * f_in / v)
        .collect();

    ReactorState {
        v: dv,
        x: dx,
        xv: dxv,
        met: dmet,
        mab: dmab,
        gly: dgly,
    }
}

/// Galactosylation index GI = [FA2G1] + 2 [FA2G2] (mg/L).
pub fn galactosylation_index(state: &ReactorState, groups: &GlycoformGroups) -> f64 {
    let g1 = groups.group_index("FA2G1").expect("FA2G1 group");
    let g2 = groups.group_index("FA2G2").expect("FA2G2 group");
    state.gly[g1] + 2.0 * state.gly[g2]
}
