use blockmc::graph::build_graph;
use blockmc::kernels::Transform;
use blockmc::spec::{assign_blocks, load_template, parse_spec, print_spec, DataSet, Role, TEMPLATES};
use blockmc::stateful::Value;
use blockmc::{Diagnostic, Error};
use proptest::prelude::*;

fn codes(src: &str) -> Vec<String> {
    parse_spec(src).unwrap_err().into_iter().map(|d| d.code).collect()
}

fn first(src: &str) -> Diagnostic {
    parse_spec(src).unwrap_err().remove(0)
}

fn build_error(src: &str, data: DataSet) -> Diagnostic {
    let spec = parse_spec(src).unwrap();
    match build_graph(&spec, &data) {
        Err(Error::Spec(mut d)) => d.remove(0),
        other => panic!("expected a spec error, got {other:?}"),
    }
}

fn plan_error(src: &str, data: DataSet) -> Diagnostic {
    let spec = parse_spec(src).unwrap();
    let g = build_graph(&spec, &data).unwrap();
    assign_blocks(&spec, &g).unwrap_err().remove(0)
}

fn ys(n: usize) -> DataSet {
    DataSet::new().with("y", Value::RealVec((0..n).map(|i| i as f64 * 0.3).collect()))
}

#[test]
fn parses_eight_schools() {
    let (spec, _) = load_template("eight_schools_centered").unwrap();
    assert_eq!(spec.name, "eight_schools_centered");
    assert_eq!(spec.sizes().count(), 1);
    assert_eq!(spec.count(Role::Data), 2);
    assert_eq!(spec.count(Role::Param), 2);
    assert_eq!(spec.count(Role::Latent), 1);
    assert_eq!(spec.factors().len(), 4);
}

#[test]
fn empty_source_is_rejected() {
    let d = first("");
    assert_eq!(d.code, "E0003");
    assert!(d.message.contains("empty"));
    assert_eq!(first("  \n# only a comment\n").code, "E0003");
}

#[test]
fn lexer_and_parser_errors_are_located() {
    let d = first("model m\nparam mu : real ~ normal(0, 1) $\n");
    assert_eq!((d.code.as_str(), d.line), ("E0001", 2));
    let d = first("model m\nparam mu : real ~ normal(0, 1\n");
    assert_eq!(d.code, "E0002");
}

#[test]
fn unknown_distribution_points_at_the_name() {
    let src = "model m\nsize N\ndata y : real[N]\nparam sigma : real<lower=0> ~ notadist(1)\ny[i] ~ normal(0, sigma)\n";
    let d = first(src);
    assert_eq!((d.code.as_str(), d.line, d.column), ("E0006", 4, 31));
    assert!(d.to_string().starts_with("error[E0006] 4:31:"), "{d}");
}

#[test]
fn cycles_are_reported_with_their_path() {
    let d = first("model m\nparam theta : real ~ normal(theta, 1)\n");
    assert_eq!(d.code, "E0007");
    assert!(d.message.contains("theta -> theta"), "{}", d.message);

    let d = first("model m\nlet a : real = b + 1\nlet b : real = a\nparam mu : real ~ normal(a, 1)\n");
    assert_eq!(d.code, "E0007");
    assert!(d.message.contains("a -> b -> a"), "{}", d.message);
}

#[test]
fn declaration_errors() {
    let dup = "model m\nparam mu : real ~ normal(0, 1)\nparam mu : real ~ normal(0, 1)\n";
    assert!(codes(dup).contains(&"E0005".to_string()));
    let undeclared = "model m\nparam mu : real ~ normal(nu, 1)\n";
    assert!(codes(undeclared).contains(&"E0004".to_string()));
    let no_prior = "model m\nsize N\ndata y : real[N]\nparam mu : real\ny[i] ~ normal(mu, 1)\n";
    assert!(codes(no_prior).contains(&"E0010".to_string()));
    let unknown_kernel = "model m\nparam mu : real ~ normal(0, 1)\nblock mu : warp_drive\n";
    assert!(codes(unknown_kernel).contains(&"E0008".to_string()));
    let twice = "model m\nparam a : real ~ normal(0, 1)\nparam b : real ~ normal(a, 1)\norder a, b, a\n";
    assert!(codes(twice).contains(&"E0012".to_string()));
}

#[test]
fn several_errors_are_collected() {
    let src = "model m\nparam mu : real ~ normal(nu, 1)\nparam mu : real ~ normal(0, 1)\nparam s : real ~ bogus(1)\n";
    let c = codes(src);
    for code in ["E0004", "E0005", "E0006"] {
        assert!(c.contains(&code.to_string()), "{code} missing from {c:?}");
    }
}

#[test]
fn dead_parameter_is_a_build_error() {
    let src = "model m\nsize N\ndata y : real[N]\nparam mu : real ~ normal(0, 1)\nparam rho : real ~ normal(0, 1)\ny[i] ~ normal(mu, 1)\n";
    let d = build_error(src, ys(5));
    assert_eq!(d.code, "E0014");
    assert!(d.message.contains("`rho`"));
}

#[test]
fn data_shape_errors() {
    let src = "model m\nsize N\ndata X : real[N, 2]\ndata y : real[N]\nparam mu : real ~ normal(0, 1)\ny[i] ~ normal(mu, 1)\n";
    let bad = ys(4).with("X", Value::RealVec(vec![1.0; 4]));
    let spec = parse_spec(src).unwrap();
    let err = build_graph(&spec, &bad).unwrap_err();
    assert!(matches!(err, Error::Data(_)), "{err:?}");
    assert!(err.to_string().contains("`X`"));
    let vector_size = "model m\nsize N\ndata y : real[N]\nparam mu : real[3] ~ normal(0, 1) init [1, 2]\ny[i] ~ normal(mu[1], 1)\n";
    assert_eq!(build_error(vector_size, ys(4)).code, "E0009");
    let missing = "model m\nsize N\ndata y : real[N]\ndata w : real[N]\nparam mu : real ~ normal(0, 1)\ny[i] ~ normal(mu + w[i], 1)\n";
    let err = build_graph(&parse_spec(missing).unwrap(), &ys(4)).unwrap_err();
    assert!(err.to_string().contains("`w`"), "{err}");
}

#[test]
fn incompatible_kernel_is_a_plan_error() {
    let src = "model m\nsize N\ndata y : real[N]\nparam mu : real ~ normal(0, 1)\nparam sigma : real<lower=0> ~ half_cauchy(0, 1)\ny[i] ~ normal(mu, sigma)\nblock sigma : inv_gamma_gibbs\n";
    let d = plan_error(src, ys(6));
    assert_eq!((d.code.as_str(), d.line), ("E0011", 7));
}

#[test]
fn printing_round_trips_every_template() {
    for t in TEMPLATES {
        let spec = parse_spec(t.source).unwrap();
        let printed = print_spec(&spec);
        let again = parse_spec(&printed).unwrap_or_else(|d| panic!("{}: {d:?}\n{printed}", t.name));
        assert_eq!(again, spec, "{}", t.name);
        assert_eq!(print_spec(&again), printed);
    }
}

#[test]
fn default_blocks_follow_the_model() {
    let plan_of = |name: &str| {
        let (spec, t) = load_template(name).unwrap();
        let g = build_graph(&spec, &t.generate(1)).unwrap();
        assign_blocks(&spec, &g).unwrap()
    };
    let lin = plan_of("linear_regression");
    let beta = lin.block_of("beta").unwrap();
    assert_eq!(beta.kernel.name, "nuts");
    assert_eq!(beta.transforms, vec![Some(Transform::Identity)]);
    let sigma = lin.block_of("sigma").unwrap();
    assert_eq!(sigma.kernel.name, "nuts");
    assert_eq!(sigma.transforms, vec![Some(Transform::Lower { lower: 0.0 })]);
    assert!(lin.blocks.iter().all(|b| !b.explicit));

    let mix = plan_of("normal_mixture");
    assert_eq!(mix.block_of("z").unwrap().kernel.name, "categorical_gibbs");
    let w = mix.block_of("w").unwrap();
    assert_eq!((w.kernel.name.as_str(), w.explicit), ("dirichlet_gibbs", true));
    assert_eq!(plan_of("hmm_gaussian_2state").block_of("z").unwrap().kernel.name, "hmm");
    assert_eq!(plan_of("dp_mixture_truncated").block_of("w").unwrap().kernel.name, "stick_breaking");

    // Every unknown is covered exactly once.
    for t in TEMPLATES {
        let plan = plan_of(t.name);
        let mut params: Vec<&String> = plan.blocks.iter().flat_map(|b| &b.params).collect();
        let n = params.len();
        params.sort();
        params.dedup();
        assert_eq!(params.len(), n, "{}", t.name);
    }
}

#[test]
fn joint_blocks_settings_and_order() {
    let src = "model m\nsize N\ndata y : real[N]\nparam a : real ~ normal(0, 1)\nparam b : real<lower=0> ~ half_cauchy(0, 1)\ny[i] ~ normal(a, b)\nblock (a, b) : joint_nuts(max_depth = 6)\n";
    let spec = parse_spec(src).unwrap();
    let g = build_graph(&spec, &ys(5)).unwrap();
    let plan = assign_blocks(&spec, &g).unwrap();
    assert_eq!(plan.blocks.len(), 1);
    assert_eq!(plan.blocks[0].params, ["a", "b"]);
    assert_eq!(plan.blocks[0].kernel.settings["max_depth"], 6.0);

    let ordered = "model m\nsize N\ndata y : real[N]\nparam a : real ~ normal(0, 1)\nparam b : real<lower=0> ~ half_cauchy(0, 1)\ny[i] ~ normal(a, b)\norder b, a\n";
    let spec = parse_spec(ordered).unwrap();
    let g = build_graph(&spec, &ys(5)).unwrap();
    let plan = assign_blocks(&spec, &g).unwrap();
    let names: Vec<&str> = plan.blocks.iter().map(|b| b.params[0].as_str()).collect();
    assert_eq!(names, ["b", "a"]);
}

#[test]
fn unknown_template_lists_the_choices() {
    let err = load_template("nope").unwrap_err().to_string();
    assert!(err.contains("eight_schools_centered"), "{err}");
}

proptest! {
    #[test]
    fn parser_never_panics(src in "[a-z_\\[\\]\\(\\)<>=:~,.0-9+*/ \\n-]{0,200}") {
        let _ = parse_spec(&src);
    }

    #[test]
    fn truncated_templates_never_panic(t in 0..TEMPLATES.len(), cut in 0usize..400) {
        let src = TEMPLATES[t].source;
        let end = cut.min(src.len());
        if let Ok(spec) = parse_spec(&src[..end]) {
            let printed = print_spec(&spec);
            prop_assert_eq!(parse_spec(&printed).unwrap(), spec);
        }
    }
}
