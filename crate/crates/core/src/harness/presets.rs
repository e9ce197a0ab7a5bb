//! Named, ready-to-run configurations.

use super::config::parse_config;
use super::RunConfig;

pub struct Preset {
    pub name: &'static str,
    pub description: &'static str,
    toml: &'static str,
}

impl Preset {
    /// The configuration, writing to `out/<name>` unless overridden.
    pub fn config(&self) -> RunConfig {
        parse_config(self.toml).unwrap_or_else(|e| panic!("preset {} is invalid: {e}", self.name))
    }

    pub fn toml(&self) -> &'static str {
        self.toml
    }
}

pub const PRESETS: &[Preset] = &[
    Preset {
        name: "mass-identity-1d",
        description: "1D implicit Euler with a forcing that switches off at t = 0.5; discrete mass identity and nonexpansivity",
        toml: r#"
name = "mass-identity-1d"
[grid]
lengths = [1.0]
counts = [64]
[equation]
m = 0.5
ray_re = 1.0
[initial]
kind = "sine"
amplitude = 1.0
[forcing]
kind = "windowed"
profile = "sine"
amplitude = 1.0
modes = [2]
temporal = "oscillating"
omega = 6.0
cutoff = 0.5
[time]
dt = 1e-3
steps = 2000
[output]
dir = "out/mass-identity-1d"
snapshot_stride = 100
[checks]
list = ["mass_identity", "apriori", "vanishing"]
"#,
    },
    Preset {
        name: "extinction-1d",
        description: "1D unforced decay to zero; extinction time against the lower bound, the envelope and the floor",
        toml: r#"
name = "extinction-1d"
[grid]
lengths = [1.0]
counts = [64]
[equation]
m = 0.5
ray_re = 1.0
[initial]
kind = "sine"
amplitude = 1.0
[time]
dt = 5e-4
steps = 24000
[output]
dir = "out/extinction-1d"
[checks]
list = ["mass_identity", "extinction", "lower_bound", "upper_bound", "envelope", "floor"]
"#,
    },
    Preset {
        name: "decay-2d",
        description: "2D unforced run; log-linear decay over the first decade of mass",
        toml: r#"
name = "decay-2d"
[grid]
lengths = [1.0, 1.0]
counts = [32, 32]
[equation]
m = 0.5
ray_re = 1.0
[initial]
kind = "sine"
amplitude = 1.0
[time]
dt = 1e-3
steps = 3000
[output]
dir = "out/decay-2d"
[checks]
list = ["mass_identity", "exponential_decay", "envelope"]
decades = 1.0
"#,
    },
    Preset {
        name: "decay-3d",
        description: "3D unforced run; fitted algebraic exponent of the L2 norm against 2/((1-m)(N-2))",
        toml: r#"
name = "decay-3d"
[grid]
lengths = [1.0, 1.0, 1.0]
counts = [16, 16, 16]
[equation]
m = 0.5
ray_re = 1.0
[initial]
kind = "sine"
amplitude = 1.0
[time]
dt = 1e-3
steps = 3000
[output]
dir = "out/decay-3d"
[checks]
list = ["mass_identity", "algebraic_decay"]
decades = 2.0
"#,
    },
    Preset {
        name: "contraction-pair",
        description: "Two 1D runs from different random data and forcings; the distance never grows beyond the forcing budget",
        toml: r#"
name = "contraction-pair"
seed = 2024
[grid]
lengths = [1.0]
counts = [64]
[equation]
m = 0.3
a_re = 0.5
a_im = 1.0
[initial]
kind = "random"
amplitude = 1.0
modes = 6
[forcing]
kind = "windowed"
profile = "gaussian"
amplitude = 2.0
width = 0.1
temporal = "oscillating"
omega = 3.0
cutoff = 0.6
[time]
dt = 1e-3
steps = 1000
[output]
dir = "out/contraction-pair"
[checks]
list = ["mass_identity", "contraction"]
[partner.initial]
kind = "random"
amplitude = 0.5
modes = 6
[partner.forcing]
kind = "windowed"
profile = "sine"
amplitude = 1.0
temporal = "decaying"
rate = 2.0
cutoff = 0.6
"#,
    },
    Preset {
        name: "smallness-1d",
        description: "1D run with small data and a forcing that vanishes like (1-t)^3 at t = 1; extinction by the cutoff",
        toml: r#"
name = "smallness-1d"
[grid]
lengths = [1.0]
counts = [64]
[equation]
m = 0.5
ray_re = 20.0
[initial]
kind = "sine"
amplitude = 0.2
[forcing]
kind = "windowed"
profile = "sine"
amplitude = 0.4
temporal = "power"
power = 3.0
cutoff = 1.0
class = "H10"
[time]
dt = 5e-4
steps = 2400
[output]
dir = "out/smallness-1d"
[checks]
list = ["mass_identity", "smallness", "h1_monitor"]
t0 = 1.0
"#,
    },
    Preset {
        name: "potential-2d",
        description: "2D run with a seeded bounded-plus-singular potential and an oscillating forcing",
        toml: r#"
name = "potential-2d"
seed = 7
[grid]
lengths = [2.0, 2.0]
counts = [24, 24]
[equation]
m = 0.6
ray_re = 1.0
[potential]
kind = "random"
amplitude = 5.0
tail_amplitude = 1.0
tail_exponent = 0.5
beta = 1.0
[initial]
kind = "gaussian"
amplitude = 1.0
width = 0.3
wavevector = [4.0, 0.0]
[forcing]
kind = "windowed"
profile = "gaussian"
amplitude = 1.0
width = 0.2
temporal = "oscillating"
omega = 10.0
cutoff = 0.5
[time]
dt = 2e-3
steps = 500
[output]
dir = "out/potential-2d"
[checks]
list = ["mass_identity", "apriori", "h1_monitor"]
"#,
    },
];

pub fn find(name: &str) -> Option<&'static Preset> {
    PRESETS.iter().find(|p| p.name == name)
}
