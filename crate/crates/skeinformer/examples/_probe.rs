use skeinformer::metrics::{verify_lemma1, verify_prop1};
use skeinformer::rng::RngSeed;

fn main() {
    for master in 0..24u64 {
        let r = verify_lemma1(128, 8, 0.2, 200, &RngSeed::new(master)).unwrap();
        let seed = RngSeed::new(master);
        let mut ms = Vec::new();
        let mut ses = Vec::new();
        for d in [8usize, 16, 32, 64] {
            let p = verify_prop1(64, 8, d, 0.1, 500, &seed).unwrap();
            ms.push(p.mean_sq_error);
            ses.push(p.se_sq_error);
        }
        let c = ms.iter().zip([8.0, 16.0, 32.0, 64.0]).map(|(m, d)| m * d).sum::<f64>() / 4.0;
        let worst = ms
            .iter()
            .zip([8.0, 16.0, 32.0, 64.0])
            .zip(&ses)
            .map(|((m, d), se)| ((m - c / d) / se).abs())
            .fold(0.0f64, f64::max);
        println!(
            "seed {master:2}: lemma1 rate {:.4} pass {:5}  prop1 decay worst {worst:.2}SE pass {}",
            r.failure_rate,
            r.pass,
            worst <= 1.0
        );
    }
}
