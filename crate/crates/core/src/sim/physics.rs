/// Specific heat capacity of water, J/(kg·K).
pub const CP_WATER: f64 = 4186.0;
/// Density of water in the operating range, kg/l.
pub const RHO_WATER: f64 = 1.0;

/// Instantaneous thermal power `mdot · c_p · (t_s − t_r)` in watts.
///
/// `mdot` is the mass flow in kg/s; the sign follows the temperature
/// difference.
pub fn thermal_power(mdot: f64, t_s: f64, t_r: f64, c_p: f64) -> f64 {
    mdot * c_p * (t_s - t_r)
}

/// Volumetric flow in l/min to mass flow in kg/s.
pub fn mass_flow(q_l_per_min: f64, rho: f64) -> f64 {
    q_l_per_min * rho / 60.0
}

/// Left-rectangle running integral: `Q[t] = Σ_{τ≤t} power[τ]·dt`.
///
/// # Panics
/// If `dt` is not positive.
pub fn accumulated_energy(power: &[f64], dt: f64) -> Vec<f64> {
    assert!(dt > 0.0, "time step must be positive");
    power
        .iter()
        .scan(0.0, |acc, p| {
            *acc += p * dt;
            Some(*acc)
        })
        .collect()
}
