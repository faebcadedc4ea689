use clap::Parser;

fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = dwmtj_cli::Cli::parse();
    let summary = dwmtj_cli::run(&cli)?;
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}
