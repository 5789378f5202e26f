//! Build a run configuration from text plus overrides and show its hash.

use ffam::config::RunConfig;

fn main() -> ffam::Result<()> {
    let mut cfg = RunConfig::default();
    cfg.apply_text(
        "# a smaller, faster run\n\
         nmf.rank = 16\n\
         scenes.count = 4\n",
    )?;
    let base = cfg.hash();
    cfg.apply_overrides(&["output.dir=elsewhere", "threads=2"])?;
    assert_eq!(cfg.hash(), base, "where and how fast never change the hash");
    cfg.apply_overrides(&["pipeline.block=2"])?;
    cfg.validate()?;
    print!("{}", cfg.to_text());
    println!("hash {} (was {base})", cfg.hash());
    Ok(())
}
