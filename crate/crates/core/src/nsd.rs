//! Intracellular nucleotide-sugar-donor synthesis model.

use crate::network::{NsdNetwork, ParameterPack};
#[cfg(test)]
use crate::network::NsdRate;
use crate::{Error, Result};

/// NSD species ordering (shared with the network files).
pub const GDP_MAN: usize = 0;
pub const GDP_FUC: usize = 1;
pub const UDP_GAL: usize = 2;
pub const UDP_GLC: usize = 3;
pub const UDP_GALNAC: usize = 4;
pub const UDP_GLCNAC: usize = 5;
pub const CMP_NEU5AC: usize = 6;

pub const N_NSD: usize = 7;

/// Cytosolic donor concentrations (mmol/L).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NsdState(pub [f64; N_NSD]);

/// Extracellular inputs the synthesis pathway senses.
#[derive(Debug, Clone, Copy, Default)]
pub struct NsdEnv {
    pub glc: f64,
    pub gal: f64,
    pub urd: f64,
    pub gln: f64,
}

/// The sixteen pathway reaction rates (mmol/L/h), in network rate order.
pub type NsdRates = [f64; 16];

#[derive(Debug, Clone)]
pub struct NsdParams {
    pub v_max_1: f64,
    pub v_max_2: f64,
    pub v_max_2b: f64,
    pub v_max_3: f64,
    pub v_max_4: f64,
    pub v_max_5: f64,
    pub v_max_6: f64,
    pub v_max_7: f64,
    pub v_max_1urd: f64,
    pub v_max_2urd: f64,
    pub v_max_4urd: f64,
    pub v_max_6urd: f64,
    pub v_max_7sink: f64,
    pub v_max_1sink: f64,
    pub v_max_6sink: f64,
    pub v_max_6gal: f64,
    pub f_gln: f64,
    pub k_m1gln: f64,
    pub k_m1sink: f64,
    pub ki_1sink: f64,
    pub k_m2glc: f64,
    pub k_m2b_udpgal: f64,
    pub ki_2a: f64,
    pub ki_2b: f64,
    pub ki_2c: f64,
    pub ki_2d: f64,
    pub k_m3glc: f64,
    pub k_m4_udpglcnac: f64,
    pub k_m5_udpglcnac: f64,
    pub ki_5: f64,
    pub k_m6_udpglc: f64,
    pub ki_6a: f64,
    pub ki_6b: f64,
    pub ki_6c: f64,
    pub k_m6sink: f64,
    pub ki_6sink: f64,
    pub k_m7_gdpman: f64,
    pub ki_7: f64,
    pub k_m7sink: f64,
    pub k_m1urd: f64,
    pub k_m2urd: f64,
    pub k_m4urd: f64,
    pub k_m6urd: f64,
    pub k_m6gal: f64,
    pub ki_6d: f64,
    pub ki_6e: f64,
    pub ki_6f: f64,
    pub k_tp: [f64; N_NSD],
    pub k_regulator: f64,
    pub v_cell: f64,
    pub v_golgi: f64,
    pub mw_mab: f64,
    pub os1_inlet_um: f64,
    pub v_hcp: [f64; N_NSD],
    pub v_prec: [f64; N_NSD],
}

impl NsdParams {
    pub fn from_pack(pack: &ParameterPack) -> Result<Self> {
        let g = |n: &str| pack.natural(n);
        let tp_names = [
            "K_TP_GDP_Man",
            "K_TP_GDP_Fuc",
            "K_TP_UDP_Gal",
            "K_TP_UDP_Glc",
            "K_TP_UDP_GalNAc",
            "K_TP_UDP_GlcNAc",
            "K_TP_CMP_Neu5Ac",
        ];
        let mut k_tp = [0.0; N_NSD];
        for (i, n) in tp_names.iter().enumerate() {
            k_tp[i] = g(n)?;
        }
        let sink_names = [
            "GDP_Man",
            "GDP_Fuc",
            "UDP_Gal",
            "UDP_Glc",
            "UDP_GalNAc",
            "UDP_GlcNAc",
            "CMP_Neu5Ac",
        ];
        let mut v_hcp = [0.0; N_NSD];
        let mut v_prec = [0.0; N_NSD];
        for (i, n) in sink_names.iter().enumerate() {
            let s = pack
                .constants
                .nsd_sinks
                .get(*n)
                .ok_or_else(|| Error::Pack(format!("missing sink stoichiometry for {n}")))?;
            v_hcp[i] = s.v_hcp_lipid_mmol_per_cell;
            v_prec[i] = s.v_precursor_mmol_per_pg;
        }
        Ok(NsdParams {
            v_max_1: g("V_max_1")?,
            v_max_2: g("V_max_2")?,
            v_max_2b: g("V_max_2b")?,
            v_max_3: g("V_max_3")?,
            v_max_4: g("V_max_4")?,
            v_max_5: g("V_max_5")?,
            v_max_6: g("V_max_6")?,
            v_max_7: g("V_max_7")?,
            v_max_1urd: g("V_max_1Urd")?,
            v_max_2urd: g("V_max_2Urd")?,
            v_max_4urd: g("V_max_4Urd")?,
            v_max_6urd: g("V_max_6Urd")?,
            v_max_7sink: g("V_max_7sink")?,
            v_max_1sink: g("V_max_1sink")?,
            v_max_6sink: g("V_max_6sink")?,
            v_max_6gal: g("V_max_6Gal")?,
            f_gln: g("f_Gln")?,
            k_m1gln: g("K_M1Gln")?,
            k_m1sink: g("K_M1sink")?,
            ki_1sink: g("KI_1sink")?,
            k_m2glc: g("K_M2Glc")?,
            k_m2b_udpgal: g("K_M2bUDPGal")?,
            ki_2a: g("KI_2A")?,
            ki_2b: g("KI_2B")?,
            ki_2c: g("KI_2C")?,
            ki_2d: g("KI_2D")?,
            k_m3glc: g("K_M3Glc")?,
            k_m4_udpglcnac: g("K_M4UDPGlcNAc")?,
            k_m5_udpglcnac: g("K_M5UDPGlcNAc")?,
            ki_5: g("KI_5")?,
            k_m6_udpglc: g("K_M6UDPGlc")?,
            ki_6a: g("KI_6A")?,
            ki_6b: g("KI_6B")?,
            ki_6c: g("KI_6C")?,
            k_m6sink: g("K_M6sink")?,
            ki_6sink: g("KI_6sink")?,
            k_m7_gdpman: g("K_M7GDPMan")?,
            ki_7: g("KI_7")?,
            k_m7sink: g("K_M7sink")?,
            k_m1urd: g("K_M1Urd")?,
            k_m2urd: g("K_M2Urd")?,
            k_m4urd: g("K_M4Urd")?,
            k_m6urd: g("K_M6Urd")?,
            k_m6gal: g("K_M6Gal")?,
            ki_6d: g("KI_6D")?,
            ki_6e: g("KI_6E")?,
            ki_6f: g("KI_6F")?,
            k_tp,
            k_regulator: pack.constants.scalar("K_regulator_mM"),
            v_cell: pack.constants.scalar("V_cell_L"),
            v_golgi: pack.constants.scalar("V_golgi_L"),
            mw_mab: pack.constants.scalar("MW_mAb_g_per_mol"),
            os1_inlet_um: pack.constants.scalar("OS1_inlet_uM"),
            v_hcp,
            v_prec,
        })
    }
}

/// All sixteen synthesis-pathway rates, ordered per the network rate list.
pub fn nsd_reaction_rates(nsd: &NsdState, env: &NsdEnv, p: &NsdParams) -> NsdRates {
    let c = &nsd.0;
    let udp_glcnac = c[UDP_GLCNAC];
    let udp_galnac = c[UDP_GALNAC];
    let udp_gal = c[UDP_GAL];
    let udp_glc = c[UDP_GLC];
    let gdp_man = c[GDP_MAN];
    let gdp_fuc = c[GDP_FUC];
    let cmp = c[CMP_NEU5AC];

    let gln_intra = p.f_gln * env.gln;

    let r1 = p.v_max_1 * gln_intra / (p.k_m1gln + gln_intra);
    let r1sink = p.v_max_1sink * udp_glcnac
        / ((p.k_m1sink + udp_glcnac) * (1.0 + cmp / p.ki_1sink));
    let r2 = p.v_max_2 * env.glc / (p.k_m2glc + env.glc);
    let r2b = p.v_max_2b * udp_gal
        / (p.k_m2b_udpgal
            * (1.0
                + udp_glcnac / p.ki_2a
                + udp_galnac / p.ki_2b
                + udp_glc / p.ki_2c
                + udp_gal / p.ki_2d)
            + udp_gal);
    let r3 = p.v_max_3 * env.glc / (p.k_m3glc + env.glc);
    let r4 = p.v_max_4 * udp_glcnac / (p.k_m4_udpglcnac + udp_glcnac);
    let r5 = p.v_max_5 * udp_glcnac
        / (p.k_m5_udpglcnac * (1.0 + cmp / p.ki_5) + udp_glcnac);
    let r6 = p.v_max_6 * udp_glc
        / (p.k_m6_udpglc
            * (1.0 + udp_glcnac / p.ki_6a + udp_galnac / p.ki_6b + udp_gal / p.ki_6c)
            + udp_glc);
    let r6sink = p.v_max_6sink * udp_gal
        / (p.k_m6sink * (1.0 + udp_glc / p.ki_6sink) + udp_gal)
        * (env.gal / (env.gal + p.k_regulator));
    let r6gal = p.v_max_6gal * env.gal
        / (p.k_m6gal * (1.0 + udp_gal / p.ki_6d + env.gal / p.ki_6e + env.urd / p.ki_6f)
            + env.gal);
    let r7 = p.v_max_7 * gdp_man / ((p.k_m7_gdpman + gdp_man) * (1.0 + gdp_fuc / p.ki_7));
    let r7sink = p.v_max_7sink * gdp_fuc / (p.k_m7sink + gdp_fuc);
    let r_urd = |v_max: f64, k_m: f64| v_max * env.urd / (k_m + env.urd);
    let r1urd = r_urd(p.v_max_1urd, p.k_m1urd);
    let r2urd = r_urd(p.v_max_2urd, p.k_m2urd);
    let r4urd = r_urd(p.v_max_4urd, p.k_m4urd);
    let r6urd = r_urd(p.v_max_6urd, p.k_m6urd);

    [
        r1, r1sink, r2, r2b, r3, r4, r5, r6, r6sink, r6gal, r7, r7sink, r1urd, r2urd, r4urd,
        r6urd,
    ]
}

/// Transport-saturated sink fluxes per donor (mmol/L/h):
/// host-cell-protein/lipid use, precursor assembly, and glycosylation.
pub fn nsd_sink_fluxes(
    nsd: &NsdState,
    mu: f64,
    q_mab: f64,
    r_glyc: &[f64; N_NSD],
    p: &NsdParams,
) -> ([f64; N_NSD], [f64; N_NSD], [f64; N_NSD]) {
    let mut hcp = [0.0; N_NSD];
    let mut prec = [0.0; N_NSD];
    let mut glyc = [0.0; N_NSD];
    for i in 0..N_NSD {
        let sat = nsd.0[i] / (p.k_tp[i] + nsd.0[i]);
        hcp[i] = sat * p.v_hcp[i] * mu / p.v_cell;
        prec[i] = sat * p.v_prec[i] * q_mab / p.v_cell;
        glyc[i] = sat * r_glyc[i];
    }
    (hcp, prec, glyc)
}

/// Golgi transit velocity (Golgi lengths per minute) and the donor
/// consumption rates of the glycosylation reactions (mmol/L/h, cytosol basis).
///
/// `os_exit_um` holds the oligosaccharide concentrations at z = 1 in umol/L;
/// `content` is the per-species donor incorporation count from the network.
pub fn glyc_consumption(
    q_mab: f64,
    os_exit_um: &[f64],
    content: &[Vec<f64>],
    p: &NsdParams,
) -> Result<(f64, [f64; N_NSD])> {
    if q_mab < 0.0 {
        return Err(Error::Domain("q_mAb must be non-negative".into()));
    }
    let vel = vel_golgi(q_mab, p);
    let mut r = [0.0; N_NSD];
    // umol/L per Golgi volume per min -> mmol/L of cytosol per hour
    let scale = vel * 60.0 * (p.v_golgi / p.v_cell) * 1.0e-3;
    for i in 0..N_NSD {
        let mut s = 0.0;
        for (j, os) in os_exit_um.iter().enumerate() {
            s += content[i][j] * os;
        }
        r[i] = scale * s;
    }
    Ok((vel, r))
}

/// Length-normalized Golgi transit velocity (min^-1). Two glycans ride on
/// each antibody, hence the factor 2.
pub fn vel_golgi(q_mab: f64, p: &NsdParams) -> f64 {
    2.0 * q_mab * 1.0e-6 / (60.0 * p.mw_mab * p.v_golgi * p.os1_inlet_um)
}

/// d[NSD_i]/dt = sum_j v_{i,j} r_j - f_hcp - f_prec - f_glyc.
pub fn nsd_rhs(
    rates: &NsdRates,
    hcp: &[f64; N_NSD],
    prec: &[f64; N_NSD],
    glyc: &[f64; N_NSD],
    net: &NsdNetwork,
) -> [f64; N_NSD] {
    let mut d = [0.0; N_NSD];
    for i in 0..N_NSD {
        let mut s = 0.0;
        for (j, r) in rates.iter().enumerate() {
            s += net.stoich[i][j] * r;
        }
        d[i] = s - hcp[i] - prec[i] - glyc[i];
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{load_parameter_pack, NsdNetwork};
    use std::path::PathBuf;

    fn params() -> NsdParams {
        let p = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/packs/ground_truth.json");
        NsdParams::from_pack(&load_parameter_pack(&p).unwrap()).unwrap()
    }

    fn network() -> NsdNetwork {
        let p =
            PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/networks/nsd_canonical.json");
        NsdNetwork::load(&p).unwrap()
    }

    #[test]
    fn zero_gal_zeroes_gal_paths() {
        let p = params();
        let nsd = NsdState([0.5; N_NSD]);
        let env = NsdEnv {
            glc: 20.0,
            gal: 0.0,
            urd: 0.3,
            gln: 1.0,
        };
        let r = nsd_reaction_rates(&nsd, &env, &p);
        assert_eq!(r[8], 0.0, "r6sink gated by extracellular Gal");
        assert_eq!(r[9], 0.0, "r6Gal needs extracellular Gal");
    }

    #[test]
    fn saturation_limits() {
        let p = params();
        let big = 1e12;
        let nsd = NsdState([big; N_NSD]);
        let env = NsdEnv {
            glc: big,
            gal: big,
            urd: big,
            gln: big,
        };
        let r = nsd_reaction_rates(&nsd, &env, &p);
        // rates without inhibitors saturate at V_max
        assert!((r[0] - p.v_max_1).abs() / p.v_max_1 < 1e-9);
        assert!((r[2] - p.v_max_2).abs() / p.v_max_2 < 1e-9);
        assert!((r[4] - p.v_max_3).abs() / p.v_max_3 < 1e-9);
        assert!((r[5] - p.v_max_4).abs() / p.v_max_4 < 1e-9);
        assert!((r[11] - p.v_max_7sink).abs() / p.v_max_7sink < 1e-9);
        for (v, k) in [
            (p.v_max_1urd, 12usize),
            (p.v_max_2urd, 13),
            (p.v_max_4urd, 14),
            (p.v_max_6urd, 15),
        ] {
            assert!((r[k] - v).abs() / v < 1e-9);
        }
    }

    #[test]
    fn rate_vector_matches_scalar_oracle() {
        let p = params();
        let nsd = NsdState([0.04, 0.01, 0.4, 1.0, 0.5, 1.2, 0.08]);
        let env = NsdEnv {
            glc: 25.0,
            gal: 8.0,
            urd: 0.2,
            gln: 2.0,
        };
        let r = nsd_reaction_rates(&nsd, &env, &p);

        let gln_i = p.f_gln * env.gln;
        assert!((r[0] - p.v_max_1 * gln_i / (p.k_m1gln + gln_i)).abs() < 1e-15);
        let r2b = p.v_max_2b * 0.4
            / (p.k_m2b_udpgal * (1.0 + 1.2 / p.ki_2a + 0.5 / p.ki_2b + 1.0 / p.ki_2c + 0.4 / p.ki_2d)
                + 0.4);
        assert!((r[3] - r2b).abs() <= 1e-12 * r2b.abs().max(1e-12));
        let r6gal = p.v_max_6gal * 8.0
            / (p.k_m6gal * (1.0 + 0.4 / p.ki_6d + 8.0 / p.ki_6e + 0.2 / p.ki_6f) + 8.0);
        assert!((r[9] - r6gal).abs() <= 1e-12 * r6gal.abs());
        let r7 = p.v_max_7 * 0.04 / ((p.k_m7_gdpman + 0.04) * (1.0 + 0.01 / p.ki_7));
        assert!((r[10] - r7).abs() <= 1e-15);
        assert!(r.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn sink_flux_edges() {
        let p = params();
        let zero = NsdState([0.0; N_NSD]);
        let (h, pr, gl) = nsd_sink_fluxes(&zero, 0.05, 0.5, &[1.0; N_NSD], &p);
        assert!(h.iter().chain(&pr).chain(&gl).all(|v| *v == 0.0));

        let s = NsdState([1.0; N_NSD]);
        let (h, pr, gl) = nsd_sink_fluxes(&s, 0.0, 0.0, &[0.0; N_NSD], &p);
        assert!(h.iter().chain(&pr).chain(&gl).all(|v| *v == 0.0));

        // half saturation at [NSD] = K_TP
        let half = NsdState(p.k_tp);
        let (h, _, _) = nsd_sink_fluxes(&half, 0.05, 0.0, &[0.0; N_NSD], &p);
        for i in 0..N_NSD {
            let unsat = p.v_hcp[i] * 0.05 / p.v_cell;
            assert!((h[i] - 0.5 * unsat).abs() <= 1e-12 * unsat.max(1e-300));
        }
    }

    #[test]
    fn vel_golgi_scalar_oracle() {
        let p = params();
        let q_mab = 0.5; // pg/cell/h
        let vel = vel_golgi(q_mab, &p);
        let expect = 2.0 * 0.5 * 1.0e-6 / (60.0 * p.mw_mab * p.v_golgi * p.os1_inlet_um);
        assert_eq!(vel, expect);
        assert_eq!(vel_golgi(0.0, &p), 0.0);
    }

    #[test]
    fn glyc_consumption_edges_and_linearity() {
        let p = params();
        let content = vec![vec![1.0; 4]; N_NSD];
        let (vel, r) = glyc_consumption(0.0, &[1.0; 4], &content, &p).unwrap();
        assert_eq!(vel, 0.0);
        assert!(r.iter().all(|v| *v == 0.0));

        let (_, r0) = glyc_consumption(0.5, &[0.0; 4], &content, &p).unwrap();
        assert!(r0.iter().all(|v| *v == 0.0));

        // linear in exit concentrations
        let (_, ra) = glyc_consumption(0.5, &[1.0, 2.0, 3.0, 4.0], &content, &p).unwrap();
        let (_, rb) = glyc_consumption(0.5, &[2.0, 4.0, 6.0, 8.0], &content, &p).unwrap();
        for i in 0..N_NSD {
            assert!((rb[i] - 2.0 * ra[i]).abs() <= 1e-15 * rb[i].abs().max(1e-300));
        }
        assert!(glyc_consumption(-0.1, &[0.0; 4], &content, &p).is_err());
    }

    #[test]
    fn rhs_matches_dense_matrix_oracle() {
        let p = params();
        let net = network();
        let nsd = NsdState([0.04, 0.01, 0.4, 1.0, 0.5, 1.2, 0.08]);
        let env = NsdEnv {
            glc: 25.0,
            gal: 8.0,
            urd: 0.2,
            gln: 2.0,
        };
        let rates = nsd_reaction_rates(&nsd, &env, &p);
        let (hcp, prec, glyc) = nsd_sink_fluxes(&nsd, 0.03, 0.5, &[0.01; N_NSD], &p);
        let d = nsd_rhs(&rates, &hcp, &prec, &glyc, &net);

        for i in 0..N_NSD {
            let mut s = 0.0;
            for j in 0..net.n_rates {
                s += net.stoich[i][j] * rates[j];
            }
            let expect = s - hcp[i] - prec[i] - glyc[i];
            assert_eq!(d[i], expect);
        }

        // all zero in, zero out
        let zero = nsd_rhs(
            &[0.0; 16],
            &[0.0; N_NSD],
            &[0.0; N_NSD],
            &[0.0; N_NSD],
            &net,
        );
        assert!(zero.iter().all(|v| *v == 0.0));
    }
}
