//! Split a small image batch into Haar subbands, check the transform is
//! lossless, and show where the energy of a smooth ramp versus white noise
//! ends up.

use wpp::rng::Domain;
use wpp::{dwt2, idwt2, subband_energy, Shape, Subband, TensorBatch};

fn main() -> wpp::Result<()> {
    let shape = Shape::new(4, 1, 16, 16);
    let noise = TensorBatch::standard_normal(shape, 1, Domain::Data, 0);
    let ramp = TensorBatch::from_vec(
        shape,
        (0..shape.len()).map(|i| ((i % 16) as f64 + (i / 16 % 16) as f64) / 16.0).collect(),
    )?;

    for (name, x) in [("white noise", &noise), ("ramp", &ramp)] {
        let bands = dwt2(x)?;
        let back = idwt2(&bands)?;
        let e = subband_energy(&bands);
        println!("{name}: roundtrip error {:.1e}", back.max_abs_diff(x)?);
        for band in Subband::ALL {
            println!("  {band:>2}  {:.4}", e.get(band));
        }
        println!("  total {:.4} vs pixel energy {:.4}", e.total(), 4.0 * x.mean_square());
    }
    Ok(())
}
