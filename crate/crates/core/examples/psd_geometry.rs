//! Pseudo-inverse algebra on a rank-deficient dominant pair: shared
//! support, the shape matrix `Φ` and its pseudo-determinant.
//!
//! cargo run --example psd_geometry

use ddpc::psdlin::{check_dominance, phi_matrix, PsdMatrix};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // Rank 2 in three dimensions; Ψ shrinks Σ unevenly on the support.
    let sigma = PsdMatrix::from_diagonal(&[5.0, 5.0, 0.0])?;
    let psi = PsdMatrix::from_row_slice(3, &[3.0, -1.0, 0.0, -1.0, 3.0, 0.0, 0.0, 0.0, 0.0])?;

    let report = check_dominance(&sigma, &psi)?;
    println!("Σ ⪰ Ψ with equal support: {} (ranks {} and {})", report.holds, report.sigma_rank, report.psi_rank);
    println!("Σ⁺ = {:.4}", sigma.pseudo_inverse().as_matrix());
    println!("Ψ⁺ = {:.4}", psi.pseudo_inverse().as_matrix());

    let phi = phi_matrix(&sigma, &psi)?;
    let spec = phi.spectral();
    println!("Φ eigenvalues on the support: {:.4?}", &spec.values.as_slice()[..spec.rank]);
    println!(
        "pdet Φ = {:.6}, pdet Σ · pdet Ψ⁺ = {:.6}",
        spec.pseudo_det()?,
        sigma.spectral().pseudo_det()? * psi.pseudo_inverse().spectral().pseudo_det()?
    );
    println!("support projector = {:.4}", sigma.spectral().projector());
    Ok(())
}
