mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use symreg::corpus::builtin_templates;
use symreg::datagen::{encode_input, generate_table};
use symreg::expr::{parse, tokenize, Vocab};
use symreg::nn::bce_loss;
use symreg::rng::Rng as StreamRng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn tokenize_then_parse_is_identity(seed in any::<u64>(), depth in 0usize..=5) {
        let vocab = Vocab::default();
        let mut r = StreamRng::seed_from_u64(seed);
        let e = common::random_expr(&mut r, depth, &vocab);
        let toks = tokenize(&e, &vocab, 512).unwrap();
        prop_assert_eq!(parse(toks.as_slice()), Ok(e.clone()));
        prop_assert!(e.depth() <= depth + 1);
    }

    #[test]
    fn parser_is_total(indices in prop::collection::vec(0usize..32, 0..=48)) {
        let vocab = Vocab::default();
        let toks: Vec<_> = indices.iter().map(|&i| vocab.token(i).unwrap()).collect();
        match parse(&toks) {
            Ok(e) => {
                let fs = e.free_symbols();
                prop_assert!(fs.variables.iter().all(|&v| v <= vocab.max_var));
                prop_assert!(fs.parameters.iter().all(|&p| p <= vocab.max_param));
            }
            Err(err) => prop_assert!(err.position <= toks.len()),
        }
    }

    #[test]
    fn loss_ignores_bit_order(
        pairs in prop::collection::vec((0.0f64..=1.0, any::<bool>()), 1..300),
        rotate in 0usize..300,
    ) {
        let o: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let t: Vec<f64> = pairs.iter().map(|p| f64::from(p.1 as u8)).collect();
        let k = rotate % o.len();
        let (mut o2, mut t2) = (o.clone(), t.clone());
        o2.rotate_left(k);
        t2.rotate_left(k);
        o2.reverse();
        t2.reverse();
        prop_assert!((bce_loss(&o, &t) - bce_loss(&o2, &t2)).abs() <= 1e-12);
    }

    #[test]
    fn tiling_never_fabricates_values(seed in any::<u64>(), pick in 0usize..24, frac in 0.0f64..1.0) {
        let templates = builtin_templates();
        let t = &templates[pick % templates.len()];
        let mut r = StreamRng::seed_from_u64(seed);
        let params = t.sample_parameters(&mut r);
        let max_rows = 200 / (t.n_vars + 1);
        let n = 2 + ((max_rows - 2) as f64 * frac) as usize;
        if let Ok(table) = generate_table(t, &params, n, &mut r) {
            let v = encode_input(&table);
            prop_assert_eq!(v.len(), 201);
            prop_assert_eq!(v[0], t.n_vars as f64);
            let mut values: Vec<u64> = table.y().iter().map(|y| y.to_bits()).collect();
            for i in 0..table.n() {
                values.extend(table.row(i).iter().map(|x| x.to_bits()));
            }
            prop_assert!(v[1..].iter().all(|x| values.contains(&x.to_bits())));
        }
    }
}
