//! Command-line half of the determinism acceptance criterion: repeated
//! embed and synth invocations must produce byte-identical artifacts.
//!
//! Run with: cargo test -p lsg-cli --test acceptance_cli -- --nocapture

mod util;

use util::{assert_ok, lsg, setup_toy};

#[test]
fn c7_cli_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let (gen, target) = setup_toy(dir.path());

    let run_embed = |tag: &str| {
        let latent = dir.path().join(format!("{tag}.wplt"));
        let image = dir.path().join(format!("{tag}.png"));
        let trace = dir.path().join(format!("{tag}.csv"));
        let out = lsg(
            &[
                "embed",
                "--image",
                &target,
                "--generator",
                &gen,
                "--steps",
                "12",
                "--loss-resolution",
                "16",
                "--record-every",
                "4",
                "--mean-samples",
                "64",
                "--seed",
                "11",
                "--init",
                "random",
                "--out-latent",
                latent.to_str().unwrap(),
                "--out-image",
                image.to_str().unwrap(),
                "--trace",
                trace.to_str().unwrap(),
            ],
            dir.path(),
        );
        assert_ok(&out, "embed");
        (
            std::fs::read(latent).unwrap(),
            std::fs::read(image).unwrap(),
            std::fs::read(trace).unwrap(),
        )
    };

    let (latent_a, image_a, trace_a) = run_embed("a");
    let (latent_b, image_b, trace_b) = run_embed("b");
    assert_eq!(latent_a, latent_b, "latent files differ between runs");
    assert_eq!(image_a, image_b, "reconstruction PNGs differ between runs");
    assert_eq!(trace_a, trace_b, "trace CSVs differ between runs");

    // Repeated synthesis of the same latent is byte-identical too.
    std::fs::write(dir.path().join("code.wplt"), &latent_a).unwrap();
    let synth = |tag: &str| {
        let png = dir.path().join(format!("synth_{tag}.png"));
        let out = lsg(
            &[
                "synth",
                "--latent",
                dir.path().join("code.wplt").to_str().unwrap(),
                "--generator",
                &gen,
                "--out",
                png.to_str().unwrap(),
            ],
            dir.path(),
        );
        assert_ok(&out, "synth");
        std::fs::read(png).unwrap()
    };
    let synth_a = synth("a");
    let synth_b = synth("b");
    assert_eq!(synth_a, synth_b, "synth PNGs differ between runs");

    // And the embed-exported image equals the synth of its own latent.
    assert_eq!(image_a, synth_a, "embed image differs from synth of saved latent");

    println!("ACCEPTANCE c7 (cli) determinism: PASS (byte-identical embed/synth artifacts)");
}
