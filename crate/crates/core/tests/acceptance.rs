//! Acceptance suite: one PASS/FAIL line per criterion, each with its own
//! wall-time budget. Informative lines (`INFO`) never affect the exit code.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tnn_accel::config::{ConfigError, ModelConfig, PlatformConfig, TileConfig};
use tnn_accel::datapath::ops::{gelu, layer_norm, softmax_rows};
use tnn_accel::datapath::{
    decoder_layer, encoder_layer, Arithmetic, FixedArith, LayerNormParams, LayerSchedules, LayerWeights,
    ModelWeights, RealArith, Tensor, Trace,
};
use tnn_accel::dse::{self, DseOptions};
use tnn_accel::engine::Accelerator;
use tnn_accel::fixedpoint::FixedFormat;
use tnn_accel::perfmodel::oracle::loopnest_oracle;
use tnn_accel::perfmodel::{cycles_to_ms, unit_latencies, PipelineConstants, Unit};
use tnn_accel::resources::{bram_estimate, dsp_estimate, memory_bandwidth};

type Outcome = Result<String, String>;

struct Criterion {
    id: u32,
    name: &'static str,
    budget: Duration,
    check: fn() -> Outcome,
}

/// A measured design point with its reference latencies in ms.
struct LatencyRow {
    cfg: ModelConfig,
    tiles: TileConfig,
    freq_mhz: f64,
    sa: f64,
    lwa: f64,
    ffn1: f64,
}

fn latency_rows() -> [LatencyRow; 4] {
    let bert = |seq| ModelConfig::new(seq, 768, 8, 1, 0);
    [
        LatencyRow { cfg: bert(64), tiles: TileConfig::new(12, 6), freq_mhz: 200.0, sa: 0.052, lwa: 0.037, ffn1: 0.082 },
        LatencyRow { cfg: bert(128), tiles: TileConfig::new(12, 6), freq_mhz: 200.0, sa: 0.103, lwa: 0.037, ffn1: 0.165 },
        LatencyRow {
            cfg: ModelConfig::new(64, 512, 8, 1, 0),
            tiles: TileConfig::new(8, 6),
            freq_mhz: 200.0,
            sa: 0.042,
            lwa: 0.025,
            ffn1: 0.055,
        },
        LatencyRow { cfg: bert(64), tiles: TileConfig::new(6, 4), freq_mhz: 135.0, sa: 0.11, lwa: 0.1, ffn1: 0.18 },
    ]
}

/// Worst relative error over all rows and the offending entries above `tol`.
fn latency_fit(k: &PipelineConstants, tol: f64) -> Result<(f64, Vec<String>), String> {
    let mut worst = 0.0f64;
    let mut misses = Vec::new();
    for (i, row) in latency_rows().iter().enumerate() {
        let b = unit_latencies(&row.cfg, &row.tiles, k).map_err(|e| e.to_string())?;
        for (unit, printed) in [(Unit::Sa, row.sa), (Unit::Lwa, row.lwa), (Unit::Ffn1, row.ffn1)] {
            let ms = cycles_to_ms(b.cycles(unit).map_err(|e| e.to_string())?, row.freq_mhz);
            let err = (ms - printed).abs() / printed;
            worst = worst.max(err);
            if err > tol {
                misses.push(format!("row {} {unit}: {ms:.5} vs {printed} ms ({:.2}%)", i + 1, 100.0 * err));
            }
        }
    }
    Ok((worst, misses))
}

fn c1_latency_reproduction() -> Outcome {
    let (worst, misses) = latency_fit(&PipelineConstants::default(), 0.03)?;
    if misses.is_empty() {
        Ok(format!("12 values, worst error {:.2}%", 100.0 * worst))
    } else {
        Err(misses.join("; "))
    }
}

fn c2_sequence_doubling() -> Outcome {
    let k = PipelineConstants::default();
    let rows = latency_rows();
    let a = unit_latencies(&rows[0].cfg, &rows[0].tiles, &k).map_err(|e| e.to_string())?;
    let b = unit_latencies(&rows[1].cfg, &rows[1].tiles, &k).map_err(|e| e.to_string())?;
    let mut parts = Vec::new();
    for unit in [Unit::Sa, Unit::Ffn1] {
        let (x, y) = (a.cycles(unit).unwrap(), b.cycles(unit).unwrap());
        if y != 2.0 * x {
            return Err(format!("{unit}: {x} -> {y} cycles"));
        }
        parts.push(format!("{unit} {x} -> {y}"));
    }
    Ok(parts.join(", "))
}

fn c3_dsp_formula() -> Outcome {
    let rows = latency_rows();
    let dsps = dsp_estimate(&rows[3].cfg, &rows[3].tiles).map_err(|e| e.to_string())?.dsps;
    if dsps == 6272.0 {
        Ok(format!("tiles (6,4): {dsps} DSPs"))
    } else {
        Err(format!("tiles (6,4): {dsps} DSPs, expected 6272"))
    }
}

fn c4_bandwidth_anchor() -> Outcome {
    let gbs = memory_bandwidth(340, 36, 129_101, 32, 200.0) / 1e9;
    if (102_000.0..=105_000.0).contains(&gbs) {
        Ok(format!("{gbs:.0} GB/s"))
    } else {
        Err(format!("{gbs:.0} GB/s outside [102000, 105000]"))
    }
}

fn divisors(n: usize) -> Vec<usize> {
    (1..=n).filter(|t| n.is_multiple_of(*t)).collect()
}

fn pick<T: Copy>(rng: &mut ChaCha8Rng, xs: &[T]) -> T {
    xs[rng.gen_range(0..xs.len())]
}

fn c5_closed_form_vs_loop_nest() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut compared = 0;
    for n in 0..100 {
        let heads = pick(&mut rng, &[1, 2, 3, 4, 8, 12]);
        let d = heads * rng.gen_range(1..=64);
        let cfg = ModelConfig::new(rng.gen_range(1..=128), d, heads, rng.gen_range(1..=4), rng.gen_range(0..=2));
        let ds = divisors(d);
        let tiles = TileConfig::fitting(pick(&mut rng, &ds), pick(&mut rng, &ds), &cfg);
        let k = PipelineConstants {
            pd_load: rng.gen_range(1..=20),
            op_overhead: rng.gen_range(0..=4),
            pd_bias_add: rng.gen_range(1..=5),
            ii: rng.gen_range(1..=3),
            ..PipelineConstants::default()
        };
        let closed = unit_latencies(&cfg, &tiles, &k).map_err(|e| format!("case {n}: {e}"))?;
        let walked = loopnest_oracle(&cfg, &tiles, &k).map_err(|e| format!("case {n}: {e}"))?;
        for u in Unit::ALL {
            let (a, b) = (closed.get(*u).unwrap(), walked.get(*u).unwrap());
            if a.cycles != b.cycles || a.accesses != b.accesses {
                return Err(format!("case {n} {cfg:?} {u}: {} vs {} cycles", a.cycles, b.cycles));
            }
            compared += 1;
        }
    }
    Ok(format!("100 configurations, {compared} unit values identical"))
}

fn quantize_layer(fmt: FixedFormat, lw: &LayerWeights<f64>) -> LayerWeights<i32> {
    lw.map(&|v| fmt.quantize_raw(v))
}

fn uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> Tensor<f64> {
    Tensor::from_fn(rows, cols, |_, _| rng.gen_range(lo..=hi))
}

fn c6_tiling_invariance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut stages = 0;
    for n in 0..200 {
        let heads = pick(&mut rng, &[1, 2, 4]);
        let d = heads * rng.gen_range(1..=48 / heads);
        let cfg = ModelConfig::new(rng.gen_range(1..=16), d, heads, 1, 1);
        let ds = divisors(d);
        let tiles = TileConfig::new(pick(&mut rng, &ds), pick(&mut rng, &ds));
        let frac = rng.gen_range(4..=12);
        let fmt = FixedFormat::new(8 + frac, frac).map_err(|e| e.to_string())?;
        let ar = FixedArith::new(fmt);
        let tiled = LayerSchedules::new(&cfg, &tiles).map_err(|e| format!("case {n}: {e}"))?;
        let single = LayerSchedules::untiled(&cfg).map_err(|e| e.to_string())?;
        let q = |t: &Tensor<f64>| t.map(|v| fmt.quantize_raw(v));
        let x = q(&uniform(&mut rng, cfg.seq_len, d, -1.0, 1.0));
        let mem = q(&uniform(&mut rng, cfg.seq_len, d, -1.0, 1.0));
        let enc = quantize_layer(fmt, &LayerWeights::random(&mut rng, &cfg, false, 0.5));
        let dec = quantize_layer(fmt, &LayerWeights::random(&mut rng, &cfg, true, 0.5));

        let mut traces: [Trace<i32>; 4] = Default::default();
        let [ea, eb, da, db] = &mut traces;
        let run = |e: tnn_accel::datapath::DatapathError| format!("case {n}: {e}");
        let oa = encoder_layer(&ar, &cfg, &tiled, &enc, &x, Some(ea)).map_err(run)?;
        let ob = encoder_layer(&ar, &cfg, &single, &enc, &x, Some(eb)).map_err(run)?;
        let pa = decoder_layer(&ar, &cfg, &tiled, &dec, &x, &mem, Some(da)).map_err(run)?;
        let pb = decoder_layer(&ar, &cfg, &single, &dec, &x, &mem, Some(db)).map_err(run)?;
        for (a, b) in ea.iter().zip(eb.iter()).chain(da.iter().zip(db.iter())) {
            if a != b {
                return Err(format!("case {n} {cfg:?} tiles {tiles:?}: stage {} differs", a.0));
            }
            stages += 1;
        }
        if oa != ob || pa != pb || ea.len() != eb.len() || da.len() != db.len() {
            return Err(format!("case {n}: layer outputs differ"));
        }
    }
    Ok(format!("200 models, {stages} stage outputs bitwise equal"))
}

fn softmax_checks(rng: &mut ChaCha8Rng) -> Result<usize, String> {
    let mut rows = 0;
    for frac in [6u32, 8, 10, 12] {
        let fmt = FixedFormat::new(16, frac).map_err(|e| e.to_string())?;
        let ar = FixedArith::new(fmt);
        for _ in 0..25 {
            let sl = rng.gen_range(1..=64);
            let s = uniform(rng, sl, sl, -4.0, 4.0).map(|v| ar.from_real(v));
            let p = softmax_rows(&ar, &s);
            let tol = sl as f64 * (-(frac as f64)).exp2();
            for i in 0..sl {
                let sum: f64 = p.row(i).iter().map(|&v| ar.to_real(v)).sum();
                if (sum - 1.0).abs() > tol {
                    return Err(format!("softmax row sum {sum} at frac {frac}, SL {sl}"));
                }
                rows += 1;
            }
            let shift = rng.gen_range(-(2 << frac)..=(2 << frac));
            if softmax_rows(&ar, &s.map(|v| v + shift)) != p {
                return Err(format!("softmax not shift invariant at frac {frac}, shift {shift}"));
            }
        }
    }
    Ok(rows)
}

fn layer_norm_checks(rng: &mut ChaCha8Rng) -> Result<usize, String> {
    let mut rows = 0;
    for _ in 0..50 {
        let (sl, d) = (rng.gen_range(1..=16), rng.gen_range(16..=64));
        // The stabilizer shrinks the output variance to var/(var + eps), so
        // rows need a spread well above eps * 1e6 to land within 1e-6.
        let x = uniform(rng, sl, d, -20.0, 20.0);
        let zero = Tensor::filled(sl, d, 0.0);
        let y = layer_norm(&RealArith, &x, &zero, &LayerNormParams::identity(d)).map_err(|e| e.to_string())?;
        for i in 0..sl {
            let mean = y.row(i).iter().sum::<f64>() / d as f64;
            let var = y.row(i).iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            if mean.abs() > 1e-9 || (var - 1.0).abs() > 1e-6 {
                return Err(format!("layer norm row mean {mean:e}, variance {var}"));
            }
            rows += 1;
        }
    }
    Ok(rows)
}

fn causality_checks(rng: &mut ChaCha8Rng) -> Result<(), String> {
    let fmt = FixedFormat::new(16, 10).map_err(|e| e.to_string())?;
    let ar = FixedArith::new(fmt);
    for n in 0..50 {
        let heads = pick(rng, &[1, 2, 4]);
        let d = heads * rng.gen_range(1..=8);
        let sl = rng.gen_range(2..=12);
        let cfg = ModelConfig::new(sl, d, heads, 1, 1);
        let sched = LayerSchedules::untiled(&cfg).map_err(|e| e.to_string())?;
        let lw = quantize_layer(fmt, &LayerWeights::random(rng, &cfg, true, 0.5));
        let x = uniform(rng, sl, d, -1.0, 1.0).map(|v| fmt.quantize_raw(v));
        let mem = uniform(rng, sl, d, -1.0, 1.0).map(|v| fmt.quantize_raw(v));
        let t = rng.gen_range(0..sl - 1);
        let mut x2 = x.clone();
        for i in t + 1..sl {
            for j in 0..d {
                x2.set(i, j, fmt.quantize_raw(rng.gen_range(-1.0..=1.0)));
            }
        }
        let a = decoder_layer(&ar, &cfg, &sched, &lw, &x, &mem, None).map_err(|e| e.to_string())?;
        let b = decoder_layer(&ar, &cfg, &sched, &lw, &x2, &mem, None).map_err(|e| e.to_string())?;
        if (0..=t).any(|i| a.row(i) != b.row(i)) {
            return Err(format!("instance {n}: rows <= {t} changed after perturbing later rows"));
        }
    }
    Ok(())
}

fn c7_numerical_properties() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let softmax_rows_checked = softmax_checks(&mut rng)?;
    let ln_rows = layer_norm_checks(&mut rng)?;
    let g = gelu(1.0);
    if (g - 0.841345).abs() > 1e-6 {
        return Err(format!("GELU(1) = {g}"));
    }
    causality_checks(&mut rng)?;
    Ok(format!(
        "{softmax_rows_checked} softmax rows, {ln_rows} layer norm rows, GELU(1) = {g:.6}, 50 causal instances"
    ))
}

fn c8_precision_trend() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let cfg = ModelConfig::new(8, 16, 2, 1, 0);
    let sched = LayerSchedules::untiled(&cfg).map_err(|e| e.to_string())?;
    let mut worst_ratio = 0.0f64;
    for n in 0..20 {
        let lw = LayerWeights::random(&mut rng, &cfg, false, 1.0);
        let x = uniform(&mut rng, cfg.seq_len, cfg.d_model, -1.0, 1.0);
        let reference = encoder_layer(&RealArith, &cfg, &sched, &lw, &x, None).map_err(|e| e.to_string())?;
        let mut errs = Vec::new();
        for frac in [6u32, 8, 10, 12] {
            let fmt = FixedFormat::new(12 + frac, frac).map_err(|e| e.to_string())?;
            let ar = FixedArith::new(fmt);
            let y = encoder_layer(&ar, &cfg, &sched, &quantize_layer(fmt, &lw), &x.map(|v| fmt.quantize_raw(v)), None)
                .map_err(|e| e.to_string())?;
            errs.push(y.map(|v| fmt.dequantize(v)).max_abs_diff(&reference));
        }
        for w in errs.windows(2) {
            if w[1] >= w[0] {
                return Err(format!("instance {n}: errors {errs:?} not strictly decreasing"));
            }
            worst_ratio = worst_ratio.max(w[1] / w[0]);
        }
    }
    Ok(format!("20 instances strictly decreasing, largest step ratio {worst_ratio:.3}"))
}

fn c9_dse_portability() -> Outcome {
    let cfg = ModelConfig::new(64, 200, 3, 2, 0);
    let mha: Vec<usize> = (6..=48).collect();
    let ffn: Vec<usize> = (2..=6).collect();
    let mut chosen = Vec::new();
    for platform in ["u55c", "zcu102", "vc707"] {
        let p = PlatformConfig::preset(platform).ok_or(format!("no preset {platform}"))?;
        let points = dse::enumerate(&cfg, &p, &mha, &ffn, None, &DseOptions::default()).map_err(|e| e.to_string())?;
        let best = dse::select_optimum(&points).map_err(|e| format!("{platform}: {e}"))?;
        chosen.push((platform, best.key(), best.latency_ms));
    }
    let summary: Vec<String> =
        chosen.iter().map(|(p, (m, f), ms)| format!("{p} ({m},{f}) {ms:.3} ms")).collect();
    let (u55c, zcu102) = (chosen[0].1, chosen[1].1);
    if zcu102.0 >= u55c.0 && zcu102.1 >= u55c.1 {
        Ok(summary.join(", "))
    } else {
        Err(format!("zcu102 uses fewer tiles than u55c: {}", summary.join(", ")))
    }
}

fn c10_runtime_adaptivity() -> Outcome {
    let fmt = FixedFormat::new(16, 10).map_err(|e| e.to_string())?;
    let tiles = TileConfig::new(2, 2);
    let mut acc = Accelerator::new(tiles, fmt);
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let topologies = [
        ModelConfig::new(8, 16, 2, 1, 0),
        ModelConfig::new(4, 32, 4, 1, 1),
        ModelConfig::new(16, 8, 1, 2, 0),
    ];
    for cfg in &topologies {
        let writes = [
            ("Sequence", cfg.seq_len),
            ("Heads", cfg.heads),
            ("Embeddings", cfg.d_model),
            ("Hidden", cfg.d_hidden),
            ("Layers_enc", cfg.n_enc),
            ("Layers_dec", cfg.n_dec),
            ("Out", cfg.out_dim),
        ];
        for (name, v) in writes {
            acc.write_register(name, v as u64).map_err(|e| format!("{name}={v}: {e}"))?;
        }
        let programmed = acc.model_config().map_err(|e| e.to_string())?;
        if programmed.seq_len != cfg.seq_len || programmed.d_model != cfg.d_model || programmed.n_dec != cfg.n_dec {
            return Err(format!("registers hold {programmed:?}, wrote {cfg:?}"));
        }
        let w = ModelWeights::random(&mut rng, cfg, 0.5);
        let x = uniform(&mut rng, cfg.seq_len, cfg.d_model, -1.0, 1.0);
        let out = acc.run(&w, &x, None).map_err(|e| e.to_string())?;
        // A freshly built instance programmed the same way must agree.
        let mut fresh = Accelerator::new(tiles, fmt);
        fresh.configure(cfg).map_err(|e| e.to_string())?;
        if out.shape() != (cfg.seq_len, cfg.d_model) || fresh.run(&w, &x, None).map_err(|e| e.to_string())? != out {
            return Err(format!("{cfg:?}: reprogrammed run disagrees with a fresh instance"));
        }
    }
    match acc.write_register("Sequence", tiles.max_seq_len as u64 + 1) {
        Err(ConfigError::ValueExceedsCapacity { .. }) => Ok("3 topologies on one instance, over-capacity write rejected".into()),
        other => Err(format!("over-capacity write returned {other:?}")),
    }
}

fn informative() {
    let eps3 = PipelineConstants { op_overhead: 3, ..PipelineConstants::default() };
    if let Ok((worst, _)) = latency_fit(&eps3, 0.03) {
        println!("INFO  latency fit with op overhead 3 cycles: worst error {:.2}%", 100.0 * worst);
    }
    let rows = latency_rows();
    if let Ok(d) = dsp_estimate(&rows[0].cfg, &rows[0].tiles) {
        println!("INFO  DSPs at tiles (12,6): {} (reference design reports 3784)", d.dsps);
    }
    if let Ok(b) = bram_estimate(&rows[0].cfg, &rows[0].tiles, 16, &PlatformConfig::u55c()) {
        println!(
            "INFO  BRAM at tiles (12,6): {} x 36 kb = {} x 18 kb (reference design reports 2375)",
            b.bram36k(),
            b.bram18k
        );
    }
}

fn main() -> ExitCode {
    let criteria = [
        Criterion { id: 1, name: "latency reproduction", budget: Duration::from_secs(1), check: c1_latency_reproduction },
        Criterion { id: 2, name: "sequence doubling", budget: Duration::from_secs(1), check: c2_sequence_doubling },
        Criterion { id: 3, name: "DSP formula", budget: Duration::from_secs(1), check: c3_dsp_formula },
        Criterion { id: 4, name: "bandwidth anchor", budget: Duration::from_secs(1), check: c4_bandwidth_anchor },
        Criterion { id: 5, name: "closed form vs loop nest", budget: Duration::from_secs(30), check: c5_closed_form_vs_loop_nest },
        Criterion { id: 6, name: "tiling invariance", budget: Duration::from_secs(60), check: c6_tiling_invariance },
        Criterion { id: 7, name: "numerical properties", budget: Duration::from_secs(30), check: c7_numerical_properties },
        Criterion { id: 8, name: "precision trend", budget: Duration::from_secs(30), check: c8_precision_trend },
        Criterion { id: 9, name: "DSE portability", budget: Duration::from_secs(10), check: c9_dse_portability },
        Criterion { id: 10, name: "runtime adaptivity", budget: Duration::from_secs(10), check: c10_runtime_adaptivity },
    ];
    let mut failed = 0;
    for c in &criteria {
        let start = Instant::now();
        let outcome = (c.check)();
        let took = start.elapsed();
        let (ok, detail) = match outcome {
            Ok(d) if took <= c.budget => (true, d),
            Ok(d) => (false, format!("{d}; over budget of {:?}", c.budget)),
            Err(e) => (false, e),
        };
        failed += usize::from(!ok);
        println!(
            "{} {:>2} {:<26} {:>8.3}s  {detail}",
            if ok { "PASS" } else { "FAIL" },
            c.id,
            c.name,
            took.as_secs_f64()
        );
    }
    informative();
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
