//! Uniqueness, bias and reproducibility of the arbiter PUF model.
//!
//!     cargo run --release --example puf_statistics

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use seccs::puf::random_challenge;
use seccs::PufDevice;

const CHALLENGES: usize = 1024;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let challenges: Vec<_> = (0..CHALLENGES)
        .map(|_| random_challenge(&mut rng, 64))
        .collect();
    let devices: Vec<_> = (0..20)
        .map(|seed| PufDevice::new(seed, 64, 0.0))
        .collect::<Result<_, _>>()?;
    let responses: Vec<Vec<bool>> = devices
        .iter()
        .map(|d| challenges.iter().map(|c| d.respond_bit(c)).collect())
        .collect::<Result<_, _>>()?;

    let mut distances = Vec::new();
    for i in 0..responses.len() {
        for j in i + 1..responses.len() {
            let d = responses[i]
                .iter()
                .zip(&responses[j])
                .filter(|(a, b)| a != b)
                .count();
            distances.push(d as f64 / CHALLENGES as f64);
        }
    }
    let mean = distances.iter().sum::<f64>() / distances.len() as f64;
    let (lo, hi) = distances
        .iter()
        .fold((1.0f64, 0.0f64), |(lo, hi), &d| (lo.min(d), hi.max(d)));
    println!("inter-device Hamming distance: mean {mean:.4}, range {lo:.3}..{hi:.3}");

    for (seed, r) in responses.iter().enumerate().take(5) {
        let ones = r.iter().filter(|&&b| b).count();
        println!(
            "device {seed}: {:.3} of responses are 1",
            ones as f64 / CHALLENGES as f64
        );
    }

    let again = PufDevice::new(0, 64, 0.0)?;
    let same = challenges
        .iter()
        .zip(&responses[0])
        .filter(|(c, &r)| again.respond_bit(c) == Ok(r))
        .count();
    println!("noise-free reproducibility: {same}/{CHALLENGES}");
    Ok(())
}
