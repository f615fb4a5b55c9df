//! Python bindings: datasets, null-model significance, reweighted training,
//! and ranking evaluation, importable as `rebpr_native`.

#[cfg(feature = "extension-module")]
mod binding {
    use pyo3::exceptions::{PyIOError, PyValueError};
    use pyo3::prelude::*;
    use pyo3::types::{PyDict, PyList};

    use rebpr::interactions::load_dataset;
    use rebpr::metrics::{evaluate, Correlation, MetricBlock};
    use rebpr::nullmodel::{
        bin_observed, bin_sample, sample_null, significance_grid, BinBoundaries,
    };
    use rebpr::recmodels::{EmbeddingModel, ModelKind, OptimizerKind};
    use rebpr::synthetic::{planted_power_niche, popularity_skewed, PlantedConfig, SkewedConfig};
    use rebpr::training::{samples_per_user, train, ReweightConfig, TrainOptions, Variant};
    use rebpr::InteractionDataset;

    fn err(e: rebpr::Error) -> PyErr {
        match &e {
            rebpr::Error::Io { .. } => PyIOError::new_err(e.to_string()),
            _ => PyValueError::new_err(e.to_string()),
        }
    }

    fn parse_variant(name: &str) -> PyResult<Variant> {
        match name {
            "vanilla" => Ok(Variant::Vanilla),
            "ui" => Ok(Variant::Ui),
            "only_item" => Ok(Variant::OnlyItem),
            "only_user" => Ok(Variant::OnlyUser),
            other => Err(PyValueError::new_err(format!(
                "unknown variant {other:?}; expected vanilla, ui, only_item, or only_user"
            ))),
        }
    }

    fn parse_kind(name: &str) -> PyResult<ModelKind> {
        match name {
            "mf" => Ok(ModelKind::Mf),
            "lgn" => Ok(ModelKind::Lgn),
            other => Err(PyValueError::new_err(format!(
                "unknown model kind {other:?}; expected mf or lgn"
            ))),
        }
    }

    fn parse_correlation(name: &str) -> PyResult<Correlation> {
        match name {
            "pearson" => Ok(Correlation::Pearson),
            "spearman" => Ok(Correlation::Spearman),
            other => Err(PyValueError::new_err(format!(
                "unknown correlation {other:?}; expected pearson or spearman"
            ))),
        }
    }

    fn parse_optimizer(name: &str) -> PyResult<OptimizerKind> {
        match name {
            "adam" => Ok(OptimizerKind::Adam),
            "sgd" => Ok(OptimizerKind::Sgd),
            other => Err(PyValueError::new_err(format!(
                "unknown optimizer {other:?}; expected adam or sgd"
            ))),
        }
    }

    fn block_dict<'py>(py: Python<'py>, b: &MetricBlock) -> PyResult<Bound<'py, PyDict>> {
        let d = PyDict::new(py);
        d.set_item("recall", b.recall)?;
        d.set_item("precision", b.precision)?;
        d.set_item("ndcg", b.ndcg)?;
        d.set_item("bias", b.bias)?;
        d.set_item("users", b.users)?;
        Ok(d)
    }

    /// A user-item interaction dataset with disjoint train and test splits.
    #[pyclass(module = "rebpr_native")]
    pub struct Dataset {
        inner: InteractionDataset,
    }

    #[pymethods]
    impl Dataset {
        /// Build from dense 0-indexed edge lists.
        #[new]
        fn new(
            num_users: usize,
            num_items: usize,
            train_edges: Vec<(u32, u32)>,
            test_edges: Vec<(u32, u32)>,
        ) -> PyResult<Self> {
            InteractionDataset::from_dense_edges(num_users, num_items, train_edges, test_edges)
                .map(|inner| Self { inner })
                .map_err(err)
        }

        /// Load adjacency-list files (`user item item ...` per line).
        #[staticmethod]
        fn load(train_path: &str, test_path: &str) -> PyResult<Self> {
            load_dataset(train_path.as_ref(), test_path.as_ref())
                .map(|inner| Self { inner })
                .map_err(err)
        }

        /// Seeded generator with a planted high-activity niche cohort.
        #[staticmethod]
        fn planted(seed: u64) -> Self {
            Self {
                inner: planted_power_niche(&PlantedConfig::default(), seed).into_dataset(),
            }
        }

        /// Seeded generator with a popularity-skewed catalog and taste groups.
        #[staticmethod]
        fn skewed(seed: u64) -> Self {
            Self {
                inner: popularity_skewed(&SkewedConfig::default(), seed).into_dataset(),
            }
        }

        #[getter]
        fn num_users(&self) -> usize {
            self.inner.num_users()
        }

        #[getter]
        fn num_items(&self) -> usize {
            self.inner.num_items()
        }

        #[getter]
        fn num_train_edges(&self) -> usize {
            self.inner.train_edges().len()
        }

        #[getter]
        fn num_test_edges(&self) -> usize {
            self.inner.test_edges().len()
        }

        fn user_degrees(&self) -> Vec<u32> {
            self.inner.user_degrees().to_vec()
        }

        fn item_degrees(&self) -> Vec<u32> {
            self.inner.item_degrees().to_vec()
        }

        /// Mean train popularity of the user's train items.
        fn pop_preference(&self, user: u32) -> PyResult<f64> {
            self.inner.pop_preference(user).map_err(err)
        }

        /// One dict per active user: user, activity, pop_preference, quadrant.
        fn quadrants<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyList>> {
            let out = PyList::empty(py);
            for p in self.inner.assign_quadrants() {
                let d = PyDict::new(py);
                d.set_item("user", p.user)?;
                d.set_item("activity", p.activity)?;
                d.set_item("pop_preference", p.pop_preference)?;
                d.set_item("quadrant", p.quadrant.as_str())?;
                out.append(d)?;
            }
            Ok(out)
        }

        /// Per-user triplet budgets under the activity exponent `alpha`.
        fn sampling_budgets(&self, alpha: f64) -> PyResult<Vec<u32>> {
            samples_per_user(&self.inner, alpha)
                .map(|plan| plan.per_user().to_vec())
                .map_err(err)
        }

        /// Observed-vs-rewired user counts on an activity x preference grid.
        ///
        /// Returns a dict of `bins x bins` nested lists: observed, null_mean,
        /// null_std, z (NaN where the null had zero variance), norm_dev, and
        /// significant. `means=True` uses the 2x2 mean-threshold grid.
        #[pyo3(signature = (bins=20, null_samples=100, seed=17, swap_multiplier=10, means=false))]
        fn significance<'py>(
            &self,
            py: Python<'py>,
            bins: usize,
            null_samples: usize,
            seed: u64,
            swap_multiplier: u64,
            means: bool,
        ) -> PyResult<Bound<'py, PyDict>> {
            let ds = &self.inner;
            let bounds = if means {
                BinBoundaries::from_means(ds)
            } else {
                BinBoundaries::from_observed(ds, bins)
            }
            .map_err(err)?;
            let observed = bin_observed(ds, &bounds);
            let binned: Vec<Vec<Vec<u64>>> = sample_null(ds, null_samples, swap_multiplier, seed)
                .iter()
                .map(|s| bin_sample(ds, s, &bounds))
                .collect();
            let grid = significance_grid(&observed, &binned).map_err(err)?;
            let d = PyDict::new(py);
            d.set_item("bins", grid.q)?;
            d.set_item("observed", grid.observed)?;
            d.set_item("null_mean", grid.null_mean)?;
            d.set_item("null_std", grid.null_std)?;
            d.set_item("z", grid.z)?;
            d.set_item("norm_dev", grid.norm_dev)?;
            d.set_item("significant", grid.significant)?;
            Ok(d)
        }

        fn __repr__(&self) -> String {
            format!(
                "Dataset(num_users={}, num_items={}, train_edges={}, test_edges={})",
                self.inner.num_users(),
                self.inner.num_items(),
                self.inner.train_edges().len(),
                self.inner.test_edges().len()
            )
        }
    }

    /// A trained embedding model frozen for scoring and evaluation.
    #[pyclass(module = "rebpr_native")]
    pub struct Model {
        inner: EmbeddingModel,
    }

    #[pymethods]
    impl Model {
        #[getter]
        fn dim(&self) -> usize {
            self.inner.dim
        }

        #[getter]
        fn kind(&self) -> &'static str {
            match self.inner.kind {
                ModelKind::Mf => "mf",
                ModelKind::Lgn => "lgn",
            }
        }

        /// Scores of every item for one user (higher ranks earlier).
        fn scores(&self, dataset: &Dataset, user: u32) -> PyResult<Vec<f64>> {
            if user as usize >= self.inner.num_users() {
                return Err(PyValueError::new_err(format!("user {user} out of range")));
            }
            let snap = self.inner.snapshot(&dataset.inner);
            Ok(snap.user_scores(user))
        }

        /// Recall/precision/NDCG@k and popularity-opportunity bias, overall
        /// and per user quadrant.
        #[pyo3(signature = (dataset, k=20, correlation="pearson"))]
        fn evaluate<'py>(
            &self,
            py: Python<'py>,
            dataset: &Dataset,
            k: usize,
            correlation: &str,
        ) -> PyResult<Bound<'py, PyDict>> {
            let corr = parse_correlation(correlation)?;
            let report = evaluate(&self.inner.snapshot(&dataset.inner), &dataset.inner, k, corr)
                .map_err(err)?;
            let d = PyDict::new(py);
            d.set_item("k", report.k)?;
            d.set_item("evaluated_users", report.evaluated_users)?;
            d.set_item("excluded_users", report.excluded_users)?;
            d.set_item("overall", block_dict(py, &report.overall)?)?;
            let quads = PyDict::new(py);
            for (name, block) in &report.quadrants {
                quads.set_item(name, block_dict(py, block)?)?;
            }
            d.set_item("quadrants", quads)?;
            Ok(d)
        }
    }

    /// Train a reweighted pairwise-ranking model and return it with its
    /// per-epoch loss trace.
    #[pyfunction]
    #[pyo3(signature = (
        dataset,
        variant = "ui",
        alpha = 0.5,
        beta = -0.5,
        epochs = 10,
        seed = 0,
        kind = "mf",
        dim = 32,
        layers = 2,
        lr = 1e-3,
        reg_lambda = 1e-4,
        batch_size = 2048,
        optimizer = "adam",
        presigmoid = false,
    ))]
    #[allow(clippy::too_many_arguments)]
    fn train_model<'py>(
        py: Python<'py>,
        dataset: &Dataset,
        variant: &str,
        alpha: f64,
        beta: f64,
        epochs: usize,
        seed: u64,
        kind: &str,
        dim: usize,
        layers: usize,
        lr: f64,
        reg_lambda: f64,
        batch_size: usize,
        optimizer: &str,
        presigmoid: bool,
    ) -> PyResult<(Model, Bound<'py, PyList>)> {
        let cfg = match parse_variant(variant)? {
            Variant::Vanilla => ReweightConfig::vanilla(epochs, seed),
            Variant::OnlyItem => ReweightConfig::only_item(epochs, seed),
            Variant::OnlyUser => ReweightConfig::only_user(epochs, seed),
            Variant::Ui => ReweightConfig::ui(alpha, beta, epochs, seed).map_err(err)?,
        };
        let ds = &dataset.inner;
        let mut model = EmbeddingModel::init(
            parse_kind(kind)?,
            ds.num_users(),
            ds.num_items(),
            dim,
            layers,
            reg_lambda,
            seed,
        )
        .map_err(err)?
        .with_presigmoid(presigmoid);
        let opts = TrainOptions {
            lr,
            batch_size,
            optimizer: parse_optimizer(optimizer)?,
            ..TrainOptions::default()
        };
        let trace = train(&cfg, ds, &mut model, &opts).map_err(err)?;
        let stats = PyList::empty(py);
        for row in &trace {
            let d = PyDict::new(py);
            d.set_item("epoch", row.epoch)?;
            d.set_item("mean_loss", row.mean_loss)?;
            d.set_item("reg_loss", row.reg_loss)?;
            stats.append(d)?;
        }
        Ok((Model { inner: model }, stats))
    }

    #[pymodule]
    pub fn rebpr_native(m: &Bound<'_, PyModule>) -> PyResult<()> {
        m.add_class::<Dataset>()?;
        m.add_class::<Model>()?;
        m.add_function(wrap_pyfunction!(train_model, m)?)?;
        Ok(())
    }
}
