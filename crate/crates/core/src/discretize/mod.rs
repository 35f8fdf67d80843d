//! Grids, reduced Laplacians, quadrature and field files.

mod field;
mod grid;
mod io;
mod stencil;

pub use field::{integrate, Field, FieldMeta};
pub use grid::{
    ball_volume, build_grid, sphere_area, Axis, Grid, GridDescriptor, GridKind,
    MAX_CARTESIAN_NODES, MIN_RESOLUTION,
};
pub use io::{
    decode_field, encode_field, load_field, save_field, sidecar_path, write_csv, MAGIC, VERSION,
};
pub use stencil::{apply_laplacian, laplacian, laplacian_fourth_order, laplacian_values};

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;
    use std::sync::Arc;

    #[test]
    fn quarter_disk_volume_is_unit_ball_in_r4() {
        let g = Arc::new(build_grid(GridKind::Biradial2d, 4, 1, 1.0, 256).unwrap());
        let f = Field::from_fn(g, |x| {
            if x[0] * x[0] + x[1] * x[1] <= 1.0 {
                1.0
            } else {
                0.0
            }
        });
        let v = integrate(&f);
        assert!((v / (PI * PI / 2.0) - 1.0).abs() < 0.01, "{v}");
    }

    #[test]
    fn radial_unit_ball_volume() {
        let g = Arc::new(build_grid(GridKind::Radial1d, 4, 1, 1.0, 64).unwrap());
        let v = integrate(&Field::from_fn(g, |_| 1.0));
        assert!((v / (PI * PI / 2.0) - 1.0).abs() < 0.01, "{v}");
    }

    #[test]
    fn bubble_power_integral() {
        // 2 pi^2 int_0^inf r^3 (1+r^2)^{-4} dr = pi^2/6
        let g = Arc::new(build_grid(GridKind::Radial1d, 4, 1, 40.0, 4000).unwrap());
        let v = integrate(&Field::from_fn(g, |x| (1.0 + x[0] * x[0]).powi(-4)));
        assert!((v / (PI * PI / 6.0) - 1.0).abs() < 0.01, "{v}");
    }

    #[test]
    fn odd_under_swap_integrates_to_zero() {
        let g = Arc::new(build_grid(GridKind::Biradial2d, 4, 1, 3.0, 64).unwrap());
        let f = Field::from_fn(g, |x| (x[0].powi(3) - x[1].powi(3)) * (-x[0] - x[1]).exp());
        let scale = integrate(&f.map(f64::abs));
        assert!(integrate(&f).abs() < 1e-14 * scale);
    }

    #[test]
    fn quadrature_converges() {
        // Gaussian in R^6 via (s, t, r): int exp(-|x|^2) = pi^3.
        let err = |n: usize| {
            let g = Arc::new(build_grid(GridKind::BiradialRadial3d, 6, 1, 6.0, n).unwrap());
            let f = Field::from_fn(g, |x| (-(x[0] * x[0] + x[1] * x[1] + x[2] * x[2])).exp());
            (integrate(&f) - PI.powi(3)).abs()
        };
        let (a, b) = (err(24), err(48));
        assert!(b < a && (a / b).log2() >= 1.0, "{a} {b}");
    }
}
