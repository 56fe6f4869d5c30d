//! Built-in problems. Each preset is a spec document whose keys act as
//! defaults beneath the user's own document.

pub const PRESET_NAMES: [&str; 12] = [
    "ou1d",
    "heat1d",
    "killing1d",
    "dissipative1d",
    "example2_3",
    "example2_4",
    "example2_5",
    "example2_6",
    "example2_7",
    "intro2d",
    "example3_8",
    "example3_9",
];

const OU1D: &str = r#"
[problem]
dimension = 1
[coefficients]
a = "1"
b1 = "-x1"
c = "0"
[lyapunov]
r = 2
[bounds]
select = ["power_gronwall"]
t_min = 0.01
t_max = 2
[grid]
extent = 8
cells = 256
[solver]
end_time = 2
snapshots = "uniform 20"
[initial]
kind = "gaussian"
mean = 1
std = 0.5
[verify]
envelope = "blowup"
rate = 0.4
power = 2
q = 1
"#;

const HEAT1D: &str = r#"
[problem]
dimension = 1
[coefficients]
a = "1"
b1 = "0"
c = "0"
[grid]
extent = 8
cells = 256
[solver]
end_time = 1
snapshots = "uniform 10"
[initial]
kind = "gaussian"
std = 0.5
[lyapunov]
r = 2
[bounds]
select = ["power_gronwall"]
t_min = 0.01
t_max = 1
[verify]
envelope = "blowup"
rate = 0.1
power = 2
q = 1
"#;

const KILLING1D: &str = r#"
[problem]
dimension = 1
[coefficients]
a = "1"
b1 = "-x1"
c = "-pow(abs(x1), 4)"
[grid]
extent = 3
cells = 96
[solver]
time_step = "fixed 5e-4"
end_time = 1
snapshots = "uniform 10"
[initial]
kind = "gaussian"
mean = 0.5
std = 0.5
[lyapunov]
r = 2
[bounds]
select = ["power_gronwall"]
t_min = 0.01
t_max = 1
[verify]
envelope = "blowup"
rate = 0.2
power = 2
q = 1
"#;

const DISSIPATIVE1D: &str = r#"
[problem]
dimension = 1
[coefficients]
a = "1"
b1 = "-x1 * abs(x1)^2"
c = "0"
[lyapunov]
r = 2
k = 4
delta = 0.5
[bounds]
select = ["power_moment"]
t_min = 0.01
t_max = 1
points = 41
region_radius = 8
[grid]
extent = 8
cells = 400
[solver]
end_time = 1
snapshots = "log 0.01 1 41"
[initial]
kind = "gaussian"
mean = 0
std = 0.25
[verify]
envelope = "blowup"
rate = 0.1
power = 2
q = 1
"#;

const EXAMPLE2_3: &str = r#"
[problem]
dimension = 1
[coefficients]
a = "1"
b1 = "0.5 * x1"
c = "0"
[lyapunov]
r = 2
[bounds]
select = ["power_gronwall"]
t_min = 0.01
t_max = 1
[grid]
extent = 12
cells = 240
[solver]
end_time = 1
snapshots = "uniform 10"
[initial]
kind = "gaussian"
std = 0.5
[verify]
envelope = "blowup"
rate = 0.05
power = 2
q = 1
"#;

const EXAMPLE2_4: &str = r#"
[problem]
dimension = 1
[coefficients]
a = "1"
b1 = "-x1"
c = "0"
[lyapunov]
r = 2
alpha = 0.25
[bounds]
select = ["exponential_gronwall"]
t_min = 0.01
t_max = 1
[grid]
extent = 8
cells = 256
[solver]
end_time = 1
snapshots = "uniform 10"
[initial]
kind = "gaussian"
std = 0.5
[verify]
envelope = "blowup"
rate = 0.2
power = 2
q = 1
"#;

const EXAMPLE2_5: &str = r#"
[problem]
dimension = 2
[coefficients]
a = "1"
b1 = "-x1 * norm(x)^2"
b2 = "-x2 * norm(x)^2"
c = "0"
[lyapunov]
r = 2
k = 4
delta = 0.5
[bounds]
select = ["power_moment"]
t_min = 1e-6
t_max = 1
points = 31
samples = 41
[grid]
extent = 4
cells = 48
[solver]
end_time = 0.5
snapshots = "log 0.01 0.5 12"
[initial]
kind = "gaussian"
mean = [1, -0.5]
std = 0.3
[verify]
envelope = "blowup"
rate = 0.1
power = 2
q = 1
"#;

const EXAMPLE2_6: &str = r#"
[problem]
dimension = 1
[coefficients]
a = "1"
b1 = "-x1"
c = "-pow(abs(x1), 4)"
[lyapunov]
r = 3
k = 4
alpha = 0.1
delta = 0.5
[bounds]
select = ["exponential_moment"]
t_min = 1e-3
t_max = 1
points = 31
region_radius = 4
[grid]
extent = 4
cells = 160
[solver]
end_time = 1
snapshots = "log 0.01 1 25"
[initial]
kind = "gaussian"
std = 0.5
[verify]
envelope = "blowup"
rate = 0.05
"#;

const EXAMPLE2_7: &str = r#"
[problem]
dimension = 1
[coefficients]
a = "1"
b1 = "-x1^3"
c = "0"
[lyapunov]
r = 3
k = 4
alpha = 0.1
beta = 2
delta = 0.5
[bounds]
select = ["time_weighted"]
t_min = 1e-3
t_max = 1
points = 31
region_radius = 6
[grid]
extent = 6
cells = 240
[solver]
end_time = 1
snapshots = "log 0.01 1 25"
[initial]
kind = "gaussian"
std = 0.5
[verify]
envelope = "time_weighted"
rate = 0.05
power = 3
beta = 2
"#;

const INTRO2D: &str = r#"
[problem]
dimension = 2
split = [1, 1]
[coefficients]
a = "exp(norm1(x)^2.5 - norm2(x)^2.5)"
b1 = "-x1 * norm(x) * exp(norm1(x)^2.5 - norm2(x)^2.5)"
b2 = "-x2 * norm(x) * exp(norm1(x)^2.5 - norm2(x)^2.5)"
c = "-norm(x)^4"
[lyapunov]
r = 3
k = 4
alpha = 0.1
delta = 0.5
[bounds]
select = ["exponential_moment"]
t_min = 1e-3
t_max = 1
points = 25
region_radius = 2
samples = 41
[grid]
extent = 2
cells = 40
[solver]
end_time = 0.25
snapshots = "log 0.01 0.25 15"
[initial]
kind = "gaussian"
std = 0.4
[verify]
envelope = "blowup"
rate = 0.05
"#;

const EXAMPLE3_8: &str = r#"
[problem]
dimension = 1
[coefficients]
a = "exp(0.1 * abs(x1)^0.5)"
b1 = "-0.5 * x1 * abs(x1) * exp(0.1 * abs(x1)^0.5)"
c = "-pow(abs(x1), 4)"
[lyapunov]
r = 3
k = 4
alpha = 0.16
delta = 0.5
[bounds]
select = ["exponential_moment"]
t_min = 1e-3
t_max = 1
points = 31
region_radius = 10
[grid]
extent = 10
cells = 1000
[solver]
end_time = 1
snapshots = "log 0.005 1 61"
[initial]
kind = "density"
density = "exp(-(abs(x1) / 9)^16)"
[verify]
envelope = "blowup"
rate = 0.15
power = 3
"#;

const EXAMPLE3_9: &str = r#"
[problem]
dimension = 1
[coefficients]
a = "1 + 0.1 * abs(x1)^0.5"
b1 = "-x1^3"
c = "0"
[lyapunov]
r = 3
k = 4
alpha = 0.1
beta = 2
delta = 0.5
[bounds]
select = ["time_weighted"]
t_min = 1e-3
t_max = 1
points = 31
region_radius = 6
[grid]
extent = 6
cells = 300
[solver]
end_time = 1
snapshots = "log 0.01 1 41"
[initial]
kind = "gaussian"
std = 0.5
[verify]
envelope = "time_weighted"
rate = 0.05
power = 3
"#;

/// Spec text of a preset.
pub fn preset_text(name: &str) -> Option<&'static str> {
    Some(match name {
        "ou1d" => OU1D,
        "heat1d" => HEAT1D,
        "killing1d" => KILLING1D,
        "dissipative1d" => DISSIPATIVE1D,
        "example2_3" => EXAMPLE2_3,
        "example2_4" => EXAMPLE2_4,
        "example2_5" => EXAMPLE2_5,
        "example2_6" => EXAMPLE2_6,
        "example2_7" => EXAMPLE2_7,
        "intro2d" => INTRO2D,
        "example3_8" => EXAMPLE3_8,
        "example3_9" => EXAMPLE3_9,
        _ => return None,
    })
}
