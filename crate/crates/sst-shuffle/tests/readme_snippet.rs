use sst_shuffle::{ksa_double_star_with, KeyStream, SamplerOptions, Scheme, StreamLabel};

#[test]
fn readme_example_compiles_and_runs() -> sst_shuffle::Result<()> {
    let (kind, rule) = Scheme::RtrtKlz.pairing();
    let mut bits = KeyStream::new(b"an example key", StreamLabel::Generic);
    let opts = SamplerOptions {
        min_steps: Some(64),
        ..Default::default()
    };
    let out = ksa_double_star_with(kind, 52, rule, &mut bits, &opts)?;
    assert!(out.steps >= 64);
    println!("{}", out.deck.to_line());
    Ok(())
}
