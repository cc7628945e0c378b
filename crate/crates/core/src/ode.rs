//! Fixed-step classical RK4 on flat state slices.

/// Stage buffers for [`Rk4::step`].
#[derive(Debug, Clone)]
pub(crate) struct Rk4 {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4 {
    pub(crate) fn new(dim: usize) -> Rk4 {
        Rk4 {
            k1: vec![0.0; dim],
            k2: vec![0.0; dim],
            k3: vec![0.0; dim],
            k4: vec![0.0; dim],
            tmp: vec![0.0; dim],
        }
    }

    /// Advance `y` by `h` (which may be negative). `f(stage, y, dy)` receives
    /// the stage index 0..4; stages 1 and 2 sit at the half step.
    pub(crate) fn step<E>(
        &mut self,
        y: &mut [f64],
        h: f64,
        mut f: impl FnMut(usize, &[f64], &mut [f64]) -> Result<(), E>,
    ) -> Result<(), E> {
        let Rk4 {
            k1,
            k2,
            k3,
            k4,
            tmp,
        } = self;
        f(0, y, k1)?;
        for i in 0..y.len() {
            tmp[i] = y[i] + 0.5 * h * k1[i];
        }
        f(1, tmp, k2)?;
        for i in 0..y.len() {
            tmp[i] = y[i] + 0.5 * h * k2[i];
        }
        f(2, tmp, k3)?;
        for i in 0..y.len() {
            tmp[i] = y[i] + h * k3[i];
        }
        f(3, tmp, k4)?;
        for i in 0..y.len() {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fourth_order_convergence() {
        // y' = y, y(0) = 1 on [0, 1].
        let run = |steps: usize| {
            let mut rk = Rk4::new(1);
            let mut y = [1.0];
            let h = 1.0 / steps as f64;
            for _ in 0..steps {
                rk.step::<()>(&mut y, h, |_, y, dy| {
                    dy[0] = y[0];
                    Ok(())
                })
                .unwrap();
            }
            (y[0] - 1f64.exp()).abs()
        };
        let ratio = run(20) / run(40);
        assert!((ratio - 16.0).abs() < 1.0, "ratio {ratio}");
    }
}
