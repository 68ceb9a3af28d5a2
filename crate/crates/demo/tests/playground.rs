use svcluster::data::Shape;
use svcluster::{Error, KernelSpec, TrainConfig};
use svcluster_demo::{preset, Playground};

fn preset_config(shape: Shape, seed: u64) -> TrainConfig {
    let p = preset(shape);
    let mut cfg = TrainConfig::new(KernelSpec::rbf(p.gamma).unwrap(), p.c);
    cfg.budget = (p.budget > 0).then_some(p.budget);
    cfg.max_steps = p.max_steps;
    cfg.stop_theta = p.stop_theta;
    cfg.seed = seed;
    cfg
}

#[test]
fn mixture_preset_recovers_components() {
    for (shape, want) in [(Shape::Gauss3, 3), (Shape::Gauss4, 4)] {
        let mut pg = Playground::new();
        pg.generate(shape, preset(shape).n, 7).unwrap();
        let trained = pg.train(&preset_config(shape, 0)).unwrap();
        assert!(trained.support_size <= 100);
        let sol = pg.cluster(preset(shape).epsilon_quantile).unwrap();
        assert_eq!(sol.num_clusters, want, "{shape:?}");
        assert!(sol.purity.unwrap() > 0.9);
        assert_eq!(
            pg.solution().unwrap().labels.len(),
            pg.data().unwrap().len()
        );
    }
}

#[test]
fn decision_grid_matches_model() {
    let mut pg = Playground::new();
    pg.generate(Shape::Gauss3, 50, 1).unwrap();
    pg.train(&preset_config(Shape::Gauss3, 1)).unwrap();
    let [x0, x1, y0, y1] = pg.bounds(0.5).unwrap();
    assert!(x0 < x1 && y0 < y1);
    let grid = pg.decision_grid(x0, x1, y0, y1, 5, 4).unwrap();
    assert_eq!(grid.len(), 20);
    let model = pg.model().unwrap();
    // Last row, last column is the top-right corner.
    assert_eq!(grid[19], model.decision_value(&[x1, y1]).unwrap());
    assert_eq!(grid[0], model.decision_value(&[x0, y0]).unwrap());
}

#[test]
fn operations_out_of_order_are_rejected() {
    let mut pg = Playground::new();
    assert!(matches!(
        pg.train(&preset_config(Shape::Moons, 0)),
        Err(Error::InvalidState(_))
    ));
    pg.generate(Shape::Moons, 30, 0).unwrap();
    assert!(matches!(pg.cluster(0.1), Err(Error::InvalidState(_))));
    assert!(pg.decision_grid(0.0, 1.0, 0.0, 1.0, 4, 4).is_err());
    pg.train(&preset_config(Shape::Moons, 0)).unwrap();
    assert!(matches!(
        pg.decision_grid(0.0, 1.0, 0.0, 1.0, 1, 4),
        Err(Error::InvalidInput(_))
    ));
}

#[test]
fn regenerating_clears_the_model() {
    let mut pg = Playground::new();
    pg.generate(Shape::Gauss4, 20, 0).unwrap();
    pg.train(&preset_config(Shape::Gauss4, 0)).unwrap();
    pg.cluster(0.7).unwrap();
    pg.generate(Shape::Gauss4, 20, 1).unwrap();
    assert!(pg.model().is_err());
    assert!(pg.solution().is_none());
}
