macro_rules! example {
    ($name:ident) => {
        mod $name {
            include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/", stringify!($name), ".rs"));
        }

        #[test]
        fn $name() {
            $name::run_example().unwrap();
        }
    };
}

example!(quickstart);
example!(lattice_walkthrough);
example!(grouping);
example!(irrelevant_covariates);
example!(adaptive_mq);
example!(missing_data);
example!(oracle_equivalence);
example!(importance);
example!(exp_decay_vs_flame);
example!(file_formats);
