use mapforensics_core::corpus::plan::search_target_totals;
use mapforensics_core::corpus::{build_generation_plan, build_search_targets, LevelQuotas};
use mapforensics_core::RegionLevel;

use super::{ensure_parent, load_vocabulary, write_sidecar, Context};
use crate::args::PlanArgs;
use crate::error::CliError;

pub fn run(args: &PlanArgs, ctx: &mut Context) -> Result<(), CliError> {
    let vocab = load_vocabulary(args.vocabulary.as_deref())?;
    let [s, c, k] = args.quotas.0;
    let plan = build_generation_plan(LevelQuotas::new(s, c, k), args.seed, &vocab, args.p_optional)?;
    let [s, c, k] = args.search_quotas.0;
    let targets = build_search_targets(LevelQuotas::new(s, c, k), &vocab)?;

    ensure_parent(&args.plan)?;
    plan.save(&args.plan, &vocab)?;
    write_sidecar(&args.plan, &ctx.effective)?;

    let generated = plan.level_totals();
    let searched = search_target_totals(&targets);
    writeln!(ctx.out, "wrote {} plan entries to {}", plan.total(), args.plan.display())?;
    writeln!(ctx.out, "{:<10}{:>10}{:>10}", "level", "generated", "searched")?;
    for level in RegionLevel::ALL {
        writeln!(
            ctx.out,
            "{:<10}{:>10}{:>10}",
            level.as_str(),
            generated.get(&level).copied().unwrap_or(0),
            searched.get(&level).copied().unwrap_or(0)
        )?;
    }
    writeln!(ctx.out, "{:<10}{:>10}{:>10}", "total", plan.total(), searched.values().sum::<u64>())?;
    Ok(())
}
