#include "paml/harness.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>

namespace py = pybind11;
using namespace paml;

namespace {

harness::ExperimentConfig config_from_kwargs(const std::string& env, const std::string& mode,
                                             bool desk_scale, const py::dict& overrides) {
    harness::ExperimentConfig cfg = harness::ExperimentConfig::defaults(env, mode);
    if (desk_scale) cfg.apply_desk_scale();
    for (auto item : overrides) {
        const std::string key = py::cast<std::string>(item.first);
        if (key == "budget") cfg.budget = py::cast<int>(item.second);
        else if (key == "trials") cfg.trials = py::cast<int>(item.second);
        else if (key == "n_init") cfg.n_init = py::cast<int>(item.second);
        else if (key == "test_tasks") cfg.test_tasks = py::cast<int>(item.second);
        else if (key == "traj_steps") cfg.traj_steps = py::cast<int>(item.second);
        else if (key == "training_steps") cfg.training_steps = py::cast<int>(item.second);
        else if (key == "inducing") cfg.inducing = py::cast<int>(item.second);
        else if (key == "latent_dim") cfg.latent_dim = py::cast<int>(item.second);
        else if (key == "inference_steps") cfg.inference_steps = py::cast<int>(item.second);
        else if (key == "batch_tasks") cfg.batch_tasks = py::cast<int>(item.second);
        else if (key == "batch_points") cfg.batch_points = py::cast<int>(item.second);
        else if (key == "image_size") cfg.image_size = py::cast<int>(item.second);
        else if (key == "pixel_corpus") cfg.pixel_corpus = py::cast<int>(item.second);
        else if (key == "vae_hidden") cfg.vae_hidden = py::cast<int>(item.second);
        else if (key == "grid_points_per_dim") cfg.grid_points_per_dim = py::cast<int>(item.second);
        else throw std::invalid_argument("unknown config override: " + key);
    }
    return cfg;
}

py::dict record_to_dict(const harness::RoundRecord& r) {
    py::dict d;
    d["strategy"] = r.strategy;
    d["trial"] = r.trial;
    d["round"] = r.round;
    d["nll"] = r.nll;
    d["rmse"] = r.rmse;
    d["utility"] = r.utility;
    d["wall_time_s"] = r.wall_time_s;
    d["descriptor"] = r.selected_descriptor;
    return d;
}

/// Thin training/prediction facade over the joint model.
class MetaModel {
public:
    MetaModel(const std::vector<py::dict>& tasks, Index latent_dim, Index inducing,
              std::uint64_t seed, const std::string& descriptor_mode) {
        std::vector<TaskDataset> ds;
        for (const auto& t : tasks) {
            TaskDataset d;
            d.inputs = py::cast<Matrix>(t["inputs"]);
            d.targets = py::cast<Matrix>(t["targets"]);
            if (t.contains("descriptor")) d.descriptor = py::cast<Vector>(t["descriptor"]);
            if (t.contains("image")) d.image = py::cast<Vector>(t["image"]);
            ds.push_back(std::move(d));
        }
        obj::TrainConfig cfg;
        cfg.latent_dim = latent_dim;
        cfg.inducing_count = inducing;
        obj::DescriptorMode mode = obj::DescriptorMode::None;
        if (descriptor_mode == "gaussian") mode = obj::DescriptorMode::Gaussian;
        else if (descriptor_mode == "pixel") mode = obj::DescriptorMode::Pixel;
        else if (descriptor_mode != "none")
            throw std::invalid_argument("descriptor_mode must be none|gaussian|pixel");
        state_ = obj::TrainState::create(std::move(ds), mode, cfg, seed);
    }

    std::vector<py::dict> train(int steps) {
        auto trace = obj::train(state_, steps);
        std::vector<py::dict> rows;
        for (const auto& r : trace) {
            py::dict d;
            d["step"] = r.step;
            d["elbo"] = r.elbo;
            d["kl_h"] = r.kl_h;
            d["kl_u"] = r.kl_u;
            d["lik_dyn"] = r.lik_dyn;
            d["lik_desc"] = r.lik_desc;
            rows.push_back(std::move(d));
        }
        return rows;
    }

    /// Few-shot prediction: infer an embedding from (shots_x, shots_y), then
    /// predict raw-space means and variances at x.
    py::tuple predict(const Matrix& x, const Matrix& shots_x, const Matrix& shots_y,
                      int inference_steps, int samples, std::uint64_t seed) {
        Rng rng(seed);
        task::StandardizedData sd{state_.standardizer.standardize_inputs(shots_x),
                                  state_.standardizer.standardize_targets(shots_y)};
        diff::AdamConfig cfg;
        cfg.alpha = state_.config.inference_alpha;
        const auto emb = state_.config.latent_dim > 0
                             ? task::infer_embedding(state_.model, sd, inference_steps, cfg, rng)
                             : task::TaskEmbedding::prior_init(0);
        const auto cache = gp::make_predictive_cache(state_.model);
        const auto res = task::predictive_mixture(
            state_.model, cache, state_.standardizer.standardize_inputs(x), emb.mean.col(0),
            emb.variances(), samples, rng);
        return to_raw(res);
    }

    py::tuple zero_shot(const Matrix& x, int samples, std::uint64_t seed) {
        Rng rng(seed);
        const auto res = task::zero_shot_predictive(
            state_.model, state_.standardizer.standardize_inputs(x), samples, rng);
        return to_raw(res);
    }

    py::dict metrics(const std::vector<py::dict>& test_tasks, int inference_steps) {
        std::vector<TaskDataset> ds;
        for (const auto& t : test_tasks) {
            TaskDataset d;
            d.inputs = py::cast<Matrix>(t["inputs"]);
            d.targets = py::cast<Matrix>(t["targets"]);
            ds.push_back(std::move(d));
        }
        const auto m = obj::predictive_nll_rmse(state_, ds, 0, inference_steps);
        py::dict out;
        out["nll"] = m.nll;
        out["rmse"] = m.rmse;
        return out;
    }

    std::vector<py::tuple> embeddings() const {
        std::vector<py::tuple> out;
        for (const auto& e : state_.embeddings)
            out.push_back(py::make_tuple(Vector(e.mean.col(0)), Vector(e.variances())));
        return out;
    }

private:
    py::tuple to_raw(const gp::MarginalResult& res) const {
        const auto& ystd = state_.standardizer.y_std;
        Matrix mean = state_.standardizer.unstandardize_targets(res.mean);
        Matrix var = res.var.array().rowwise() * ystd.transpose().array().square();
        return py::make_tuple(mean, var);
    }

    obj::TrainState state_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Probabilistic active meta-learning: dynamics meta-model, task selection, "
              "simulators";

    m.def("control_signal", &envs::control_signal, py::arg("bound"), py::arg("steps"),
          py::arg("alternations"),
          "Alternating ramp control sequence {C/2..C, -C/2..-C, ...}");

    m.def(
        "simulate_task",
        [](const std::string& env, const std::string& mode, const Vector& descriptor,
           std::uint64_t seed, bool desk_scale, const py::dict& overrides) {
            auto cfg = config_from_kwargs(env, mode, desk_scale, overrides);
            Rng rng(seed);
            const TaskDataset ds = harness::simulate_task(cfg, descriptor, rng);
            py::dict out;
            out["inputs"] = ds.inputs;
            out["targets"] = ds.targets;
            out["descriptor"] = ds.descriptor;
            if (ds.image.size() > 0) out["image"] = ds.image;
            return out;
        },
        py::arg("env"), py::arg("mode") = "full", py::arg("descriptor"), py::arg("seed") = 0,
        py::arg("desk_scale") = false, py::arg("overrides") = py::dict());

    m.def(
        "render_cartpole",
        [](double mass, double length, Index size, std::optional<Vector> state) {
            envs::CartPoleParams p;
            p.pendulum_mass = mass;
            p.pendulum_length = length;
            Vector s(4);
            s << 0.0, M_PI, 0.0, 0.0;
            if (state) s = *state;
            return envs::render_cartpole(p, s, size);
        },
        py::arg("mass"), py::arg("length"), py::arg("size") = 32,
        py::arg("state") = std::nullopt);

    m.def(
        "rbf_gram",
        [](const Matrix& a, const Matrix& b, double signal_variance, const Vector& lengthscales) {
            auto k = gp::RbfKernel::create(a.cols());
            k.log_signal_variance(0, 0) = std::log(signal_variance);
            k.log_sq_lengthscales = 2.0 * lengthscales.array().log();
            return k.gram(a, b);
        },
        py::arg("a"), py::arg("b"), py::arg("signal_variance") = 1.0, py::arg("lengthscales"));

    m.def(
        "utility",
        [](const Vector& h, const std::vector<std::pair<Vector, Vector>>& components) {
            std::vector<task::TaskEmbedding> embs;
            for (const auto& [mean, var] : components) {
                task::TaskEmbedding e;
                e.mean = mean;
                e.log_var = var.array().log();
                embs.push_back(std::move(e));
            }
            return sel::utility(h, embs);
        },
        py::arg("h"), py::arg("components"),
        "Self-information of h under the equal-weight Gaussian mixture "
        "[(mean, variance), ...]");

    m.def(
        "lhs_sample",
        [](const Vector& lower, const Vector& upper, int n, std::uint64_t seed) {
            Rng rng(seed);
            sel::DescriptorBounds b{lower, upper};
            const auto pts = sel::lhs_sample(rng, b, n);
            Matrix out(n, lower.size());
            for (int i = 0; i < n; ++i) out.row(i) = pts[static_cast<std::size_t>(i)];
            return out;
        },
        py::arg("lower"), py::arg("upper"), py::arg("n"), py::arg("seed") = 0);

    m.def(
        "uniform_sample",
        [](const Vector& lower, const Vector& upper, std::uint64_t seed) {
            Rng rng(seed);
            sel::DescriptorBounds b{lower, upper};
            return sel::uniform_sample(rng, b);
        },
        py::arg("lower"), py::arg("upper"), py::arg("seed") = 0);

    py::class_<MetaModel>(m, "MetaModel")
        .def(py::init<const std::vector<py::dict>&, Index, Index, std::uint64_t,
                      const std::string&>(),
             py::arg("tasks"), py::arg("latent_dim") = 2, py::arg("inducing") = 32,
             py::arg("seed") = 0, py::arg("descriptor_mode") = "none")
        .def("train", &MetaModel::train, py::arg("steps"))
        .def("predict", &MetaModel::predict, py::arg("x"), py::arg("shots_x"),
             py::arg("shots_y"), py::arg("inference_steps") = 100, py::arg("samples") = 8,
             py::arg("seed") = 0)
        .def("zero_shot", &MetaModel::zero_shot, py::arg("x"), py::arg("samples") = 32,
             py::arg("seed") = 0)
        .def("metrics", &MetaModel::metrics, py::arg("test_tasks"),
             py::arg("inference_steps") = 100)
        .def("embeddings", &MetaModel::embeddings);

    m.def(
        "run_active_loop",
        [](const std::string& env, const std::string& mode, const std::string& strategy,
           std::uint64_t seed, bool desk_scale, const py::dict& overrides) {
            auto cfg = config_from_kwargs(env, mode, desk_scale, overrides);
            const auto res = harness::run_active_loop(cfg, strategy, seed, 0);
            std::vector<py::dict> out;
            for (const auto& r : res.records) out.push_back(record_to_dict(r));
            return out;
        },
        py::arg("env"), py::arg("mode") = "full", py::arg("strategy") = "paml",
        py::arg("seed") = 0, py::arg("desk_scale") = true, py::arg("overrides") = py::dict());

    m.def(
        "run_oracle",
        [](const std::string& env, const std::string& mode, std::uint64_t seed, bool desk_scale,
           const py::dict& overrides) {
            auto cfg = config_from_kwargs(env, mode, desk_scale, overrides);
            const auto r = harness::run_oracle(cfg, seed);
            py::dict out;
            out["nll"] = r.nll;
            out["rmse"] = r.rmse;
            return out;
        },
        py::arg("env"), py::arg("mode") = "full", py::arg("seed") = 0,
        py::arg("desk_scale") = true, py::arg("overrides") = py::dict());
}
