use anyhow::{Context, Result};
use regionwise_core::geometry::{register_affine, RegistrationConfig};
use regionwise_core::volio::{read_nifti, Intent};

use crate::{RegisterArgs, EXIT_NOT_CONVERGED, EXIT_OK};

pub fn run(args: &RegisterArgs) -> Result<i32> {
    let load = |p: &std::path::Path| -> Result<_> {
        let v = read_nifti(p).with_context(|| format!("cannot load {}", p.display()))?;
        // Images without an intent tag are intensities; anything else is re-tagged.
        Ok(v.with_intent(Intent::Intensity)?)
    };
    let moving = load(&args.moving)?;
    let fixed = load(&args.fixed)?;
    let cfg =
        RegistrationConfig { pyramid_levels: args.levels, max_iters_per_level: args.max_iters, ..RegistrationConfig::default() };
    let result = register_affine(&moving, &fixed, &cfg)?;
    result.transform.write(&args.out_transform).with_context(|| format!("cannot write {}", args.out_transform.display()))?;
    println!("final_cost={:e} converged={} iterations={}", result.final_cost, result.converged, result.iterations_used);
    if result.converged {
        Ok(EXIT_OK)
    } else {
        eprintln!("warning: registration did not converge; transform written anyway");
        Ok(EXIT_NOT_CONVERGED)
    }
}
