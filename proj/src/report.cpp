#include "paml/harness.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace paml::harness {

namespace {

std::string join_values(const Vector& v) {
    std::ostringstream out;
    out << std::setprecision(17);
    for (Index i = 0; i < v.size(); ++i) {
        if (i) out << ';';
        out << v[i];
    }
    return out.str();
}

Vector split_values(const std::string& s) {
    if (s.empty()) return Vector(0);
    std::vector<double> vals;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ';')) vals.push_back(std::stod(item));
    Vector v(static_cast<Index>(vals.size()));
    for (std::size_t i = 0; i < vals.size(); ++i) v[static_cast<Index>(i)] = vals[i];
    return v;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    bool quoted = false;
    for (char c : line) {
        if (c == '"') {
            quoted = !quoted;
        } else if (c == ',' && !quoted) {
            cells.push_back(cell);
            cell.clear();
        } else {
            cell.push_back(c);
        }
    }
    cells.push_back(cell);
    return cells;
}

}  // namespace

void write_records_csv(const std::vector<RoundRecord>& records, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path);
    out << "strategy,trial,seed,round,nll,rmse,utility,wall_time_s,descriptor\n";
    out << std::setprecision(17);
    for (const auto& r : records) {
        out << r.strategy << ',' << r.trial << ',' << r.seed << ',' << r.round << ',' << r.nll
            << ',' << r.rmse << ',' << r.utility << ',' << r.wall_time_s << ",\""
            << join_values(r.selected_descriptor) << "\"\n";
    }
}

std::vector<RoundRecord> read_records_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::string line;
    std::getline(in, line);  // header
    std::vector<RoundRecord> records;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto cells = split_csv_line(line);
        if (cells.size() < 9) throw std::runtime_error("malformed curves csv line: " + line);
        RoundRecord r;
        r.strategy = cells[0];
        r.trial = std::stoi(cells[1]);
        r.seed = std::stoull(cells[2]);
        r.round = std::stoi(cells[3]);
        r.nll = std::stod(cells[4]);
        r.rmse = std::stod(cells[5]);
        r.utility = std::stod(cells[6]);
        r.wall_time_s = std::stod(cells[7]);
        r.selected_descriptor = split_values(cells[8]);
        records.push_back(std::move(r));
    }
    return records;
}

namespace {

struct PlotFrame {
    double x0 = 70, y0 = 40, w = 520, h = 320;  // plot area in svg coords
    double xmin = 0, xmax = 1, ymin = 0, ymax = 1;

    double px(double x) const { return x0 + (x - xmin) / (xmax - xmin) * w; }
    double py(double y) const { return y0 + h - (y - ymin) / (ymax - ymin) * h; }
};

const char* strategy_color(const std::string& s) {
    if (s == "paml") return "#d62728";
    if (s == "uni") return "#1f77b4";
    if (s == "lhs") return "#2ca02c";
    return "#7f7f7f";
}

void svg_header(std::ofstream& out, int w, int h) {
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
        << "\" viewBox=\"0 0 " << w << " " << h << "\">\n"
        << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
}

void draw_axes(std::ofstream& out, const PlotFrame& f, const std::string& xlabel,
               const std::string& ylabel) {
    out << "<rect x=\"" << f.x0 << "\" y=\"" << f.y0 << "\" width=\"" << f.w << "\" height=\""
        << f.h << "\" fill=\"none\" stroke=\"black\"/>\n";
    for (int i = 0; i <= 4; ++i) {
        const double xv = f.xmin + (f.xmax - f.xmin) * i / 4.0;
        const double yv = f.ymin + (f.ymax - f.ymin) * i / 4.0;
        out << "<text x=\"" << f.px(xv) << "\" y=\"" << f.y0 + f.h + 18
            << "\" font-size=\"11\" text-anchor=\"middle\">" << std::setprecision(3) << xv
            << "</text>\n";
        out << "<text x=\"" << f.x0 - 8 << "\" y=\"" << f.py(yv) + 4
            << "\" font-size=\"11\" text-anchor=\"end\">" << std::setprecision(3) << yv
            << "</text>\n";
    }
    out << "<text x=\"" << f.x0 + f.w / 2 << "\" y=\"" << f.y0 + f.h + 34
        << "\" font-size=\"13\" text-anchor=\"middle\">" << xlabel << "</text>\n";
    out << "<text x=\"16\" y=\"" << f.y0 + f.h / 2
        << "\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
        << f.y0 + f.h / 2 << ")\">" << ylabel << "</text>\n";
}

}  // namespace

void write_curves_svg(const std::vector<CurvePoint>& curves, const std::string& metric,
                      double oracle_level, bool have_oracle, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path);
    auto value = [&](const CurvePoint& p) { return metric == "rmse" ? p.mean_rmse : p.mean_nll; };
    auto se = [&](const CurvePoint& p) { return metric == "rmse" ? p.se_rmse : p.se_nll; };

    PlotFrame f;
    f.xmin = 0;
    f.xmax = 1;
    double lo = 1e300, hi = -1e300;
    for (const auto& p : curves) {
        f.xmax = std::max(f.xmax, static_cast<double>(p.round));
        lo = std::min(lo, value(p) - se(p));
        hi = std::max(hi, value(p) + se(p));
    }
    if (have_oracle) {
        lo = std::min(lo, oracle_level);
        hi = std::max(hi, oracle_level);
    }
    if (curves.empty()) lo = 0, hi = 1;
    const double pad = 0.08 * std::max(1e-9, hi - lo);
    f.ymin = lo - pad;
    f.ymax = hi + pad;

    svg_header(out, 640, 420);
    draw_axes(out, f, "tasks added", metric == "rmse" ? "RMSE" : "NLL");

    std::vector<std::string> strategies;
    for (const auto& p : curves)
        if (std::find(strategies.begin(), strategies.end(), p.strategy) == strategies.end())
            strategies.push_back(p.strategy);

    for (const auto& s : strategies) {
        std::vector<const CurvePoint*> pts;
        for (const auto& p : curves)
            if (p.strategy == s) pts.push_back(&p);
        std::sort(pts.begin(), pts.end(),
                  [](const CurvePoint* a, const CurvePoint* b) { return a->round < b->round; });
        out << "<polyline fill=\"none\" stroke=\"" << strategy_color(s)
            << "\" stroke-width=\"2\" points=\"";
        for (const auto* p : pts) out << f.px(p->round) << ',' << f.py(value(*p)) << ' ';
        out << "\"/>\n";
        for (const auto* p : pts) {
            out << "<line x1=\"" << f.px(p->round) << "\" x2=\"" << f.px(p->round) << "\" y1=\""
                << f.py(value(*p) - se(*p)) << "\" y2=\"" << f.py(value(*p) + se(*p))
                << "\" stroke=\"" << strategy_color(s) << "\" stroke-width=\"1\"/>\n";
            out << "<circle cx=\"" << f.px(p->round) << "\" cy=\"" << f.py(value(*p))
                << "\" r=\"2.5\" fill=\"" << strategy_color(s) << "\"/>\n";
        }
    }
    if (have_oracle) {
        out << "<line x1=\"" << f.px(f.xmin) << "\" x2=\"" << f.px(f.xmax) << "\" y1=\""
            << f.py(oracle_level) << "\" y2=\"" << f.py(oracle_level)
            << "\" stroke=\"black\" stroke-dasharray=\"6,4\"/>\n";
        out << "<text x=\"" << f.px(f.xmax) - 4 << "\" y=\"" << f.py(oracle_level) - 5
            << "\" font-size=\"11\" text-anchor=\"end\">oracle</text>\n";
    }
    double ly = 56;
    for (const auto& s : strategies) {
        out << "<rect x=\"" << f.x0 + f.w - 90 << "\" y=\"" << ly - 9
            << "\" width=\"14\" height=\"4\" fill=\"" << strategy_color(s) << "\"/>\n";
        out << "<text x=\"" << f.x0 + f.w - 70 << "\" y=\"" << ly << "\" font-size=\"12\">" << s
            << "</text>\n";
        ly += 16;
    }
    out << "</svg>\n";
}

void write_latents_svg(const TrialResult& trial, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path);
    const auto& embs = trial.final_embeddings;
    if (embs.empty() || embs[0].dim() < 2) {
        svg_header(out, 480, 480);
        out << "<text x=\"20\" y=\"30\">latent space below two dimensions</text></svg>\n";
        return;
    }

    PlotFrame f;
    f.x0 = 60;
    f.y0 = 40;
    f.w = 380;
    f.h = 380;
    double lo0 = 1e300, hi0 = -1e300, lo1 = 1e300, hi1 = -1e300;
    for (const auto& e : embs) {
        const double s0 = 2.0 * std::sqrt(e.variances()[0]);
        const double s1 = 2.0 * std::sqrt(e.variances()[1]);
        lo0 = std::min(lo0, e.mean(0, 0) - s0);
        hi0 = std::max(hi0, e.mean(0, 0) + s0);
        lo1 = std::min(lo1, e.mean(1, 0) - s1);
        hi1 = std::max(hi1, e.mean(1, 0) + s1);
    }
    const double pad0 = 0.1 * std::max(1e-9, hi0 - lo0);
    const double pad1 = 0.1 * std::max(1e-9, hi1 - lo1);
    f.xmin = lo0 - pad0;
    f.xmax = hi0 + pad0;
    f.ymin = lo1 - pad1;
    f.ymax = hi1 + pad1;

    svg_header(out, 480, 480);
    draw_axes(out, f, "latent dim 1", "latent dim 2");
    for (std::size_t i = 0; i < embs.size(); ++i) {
        const auto& e = embs[i];
        const double cx = f.px(e.mean(0, 0));
        const double cy = f.py(e.mean(1, 0));
        const double sx = std::abs(f.px(e.mean(0, 0) + 2.0 * std::sqrt(e.variances()[0])) - cx);
        const double sy = std::abs(f.py(e.mean(1, 0) + 2.0 * std::sqrt(e.variances()[1])) - cy);
        const bool selected = trial.selection_rounds[i] > 0;
        const char* color = selected ? "#d62728" : "black";
        out << "<line x1=\"" << cx - sx << "\" x2=\"" << cx + sx << "\" y1=\"" << cy << "\" y2=\""
            << cy << "\" stroke=\"" << color << "\" stroke-width=\"1\"/>\n";
        out << "<line x1=\"" << cx << "\" x2=\"" << cx << "\" y1=\"" << cy - sy << "\" y2=\""
            << cy + sy << "\" stroke=\"" << color << "\" stroke-width=\"1\"/>\n";
        out << "<circle cx=\"" << cx << "\" cy=\"" << cy << "\" r=\"3.5\" fill=\"" << color
            << "\"/>\n";
        if (selected)
            out << "<text x=\"" << cx + 5 << "\" y=\"" << cy - 5 << "\" font-size=\"12\" fill=\""
                << color << "\">" << trial.selection_rounds[i] << "</text>\n";
    }
    out << "</svg>\n";
}

void export_results(const std::vector<RoundRecord>& records,
                    const std::vector<TrialResult>& paml_trials,
                    const std::vector<OracleResult>& oracle, const std::string& out_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    const fs::path dir(out_dir);

    write_records_csv(records, (dir / "curves.csv").string());

    {
        std::ofstream out(dir / "selections.csv");
        out << "strategy,trial,round,utility,latent,descriptor\n";
        out << std::setprecision(17);
        for (const auto& r : records) {
            if (r.selected_descriptor.size() == 0) continue;
            out << r.strategy << ',' << r.trial << ',' << r.round << ',' << r.utility << ",\""
                << join_values(r.selected_latent) << "\",\""
                << join_values(r.selected_descriptor) << "\"\n";
        }
    }

    if (!paml_trials.empty()) {
        std::ofstream out(dir / "elbo_trace.csv");
        out << "step,elbo,kl_h,kl_u,lik_dyn,lik_desc\n";
        out << std::setprecision(17);
        for (const auto& row : paml_trials.front().elbo_trace)
            out << row.step << ',' << row.elbo << ',' << row.kl_h << ',' << row.kl_u << ','
                << row.lik_dyn << ',' << row.lik_desc << '\n';
    }

    const auto curves = aggregate(records);
    {
        std::ofstream out(dir / "summary.csv");
        out << "strategy,round,mean_nll,se_nll,mean_rmse,se_rmse,trials\n";
        out << std::setprecision(17);
        for (const auto& p : curves)
            out << p.strategy << ',' << p.round << ',' << p.mean_nll << ',' << p.se_nll << ','
                << p.mean_rmse << ',' << p.se_rmse << ',' << p.trials << '\n';
    }

    double oracle_nll = 0.0, oracle_rmse = 0.0;
    if (!oracle.empty()) {
        for (const auto& o : oracle) {
            oracle_nll += o.nll;
            oracle_rmse += o.rmse;
        }
        oracle_nll /= static_cast<double>(oracle.size());
        oracle_rmse /= static_cast<double>(oracle.size());
        std::ofstream out(dir / "oracle.csv");
        out << "seed,nll,rmse\n" << std::setprecision(17);
        for (const auto& o : oracle) out << o.seed << ',' << o.nll << ',' << o.rmse << '\n';
    }

    write_curves_svg(curves, "nll", oracle_nll, !oracle.empty(),
                     (dir / "curves_nll.svg").string());
    write_curves_svg(curves, "rmse", oracle_rmse, !oracle.empty(),
                     (dir / "curves_rmse.svg").string());

    if (!paml_trials.empty()) {
        const auto& trial = paml_trials.front();
        const int final_round =
            trial.records.empty() ? 0 : trial.records.back().round;
        write_latents_svg(trial,
                          (dir / ("latents_round_" + std::to_string(final_round) + ".svg")).string());
    }
}

ExperimentConfig load_config_file(const std::string& path, ExperimentConfig base) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file " + path);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        std::istringstream ss(line);
        std::string key;
        if (!(ss >> key)) continue;
        std::string value;
        if (!(ss >> value))
            throw std::runtime_error("config line " + std::to_string(lineno) + ": missing value");

        auto as_int = [&] { return std::stoi(value); };
        auto as_double = [&] { return std::stod(value); };
        if (key == "env") base.env = value;
        else if (key == "mode") base.mode = value;
        else if (key == "n_init") base.n_init = as_int();
        else if (key == "budget") base.budget = as_int();
        else if (key == "trials") base.trials = as_int();
        else if (key == "test_tasks") base.test_tasks = as_int();
        else if (key == "traj_steps") base.traj_steps = as_int();
        else if (key == "control_alternations") base.control_alternations = as_int();
        else if (key == "dt") base.dt = as_double();
        else if (key == "training_steps") base.training_steps = as_int();
        else if (key == "oracle_training_steps") base.oracle_training_steps = as_int();
        else if (key == "inducing") base.inducing = as_int();
        else if (key == "latent_dim") base.latent_dim = as_int();
        else if (key == "batch_tasks") base.batch_tasks = as_int();
        else if (key == "batch_points") base.batch_points = as_int();
        else if (key == "adam_alpha") base.adam_alpha = as_double();
        else if (key == "inference_steps") base.inference_steps = as_int();
        else if (key == "inference_alpha") base.inference_alpha = as_double();
        else if (key == "eval_latent_samples") base.eval_latent_samples = as_int();
        else if (key == "descriptor_weight") base.descriptor_weight = as_double();
        else if (key == "decoder_hidden") base.decoder_hidden = as_int();
        else if (key == "grid_points_per_dim") base.grid_points_per_dim = as_int();
        else if (key == "candidate_source") base.candidate_source = value;
        else if (key == "image_size") base.image_size = as_int();
        else if (key == "pixel_corpus") base.pixel_corpus = as_int();
        else if (key == "vae_hidden") base.vae_hidden = as_int();
        else if (key == "vae_candidate_batch") base.vae_candidate_batch = as_int();
        else if (key == "vae_alpha") base.vae_alpha = as_double();
        else if (key == "seed") base.seed = std::stoull(value);
        else if (key == "cold_start") base.cold_start = (value == "1" || value == "true");
        else if (key == "desk_scale") { if (value == "1" || value == "true") base.apply_desk_scale(); }
        else throw std::runtime_error("config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    }
    return base;
}

void write_config_file(const ExperimentConfig& cfg, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path);
    out << "env " << cfg.env << "\nmode " << cfg.mode << "\nn_init " << cfg.n_init << "\nbudget "
        << cfg.budget << "\ntrials " << cfg.trials << "\ntest_tasks " << cfg.test_tasks
        << "\ntraj_steps " << cfg.traj_steps << "\ncontrol_alternations "
        << cfg.control_alternations << "\ndt " << cfg.dt << "\ntraining_steps "
        << cfg.training_steps << "\noracle_training_steps " << cfg.oracle_training_steps
        << "\ninducing " << cfg.inducing << "\nlatent_dim " << cfg.latent_dim
        << "\nbatch_tasks " << cfg.batch_tasks << "\nbatch_points " << cfg.batch_points
        << "\nadam_alpha " << cfg.adam_alpha << "\ninference_steps " << cfg.inference_steps
        << "\ninference_alpha " << cfg.inference_alpha << "\neval_latent_samples "
        << cfg.eval_latent_samples << "\ndescriptor_weight " << cfg.descriptor_weight
        << "\ndecoder_hidden " << cfg.decoder_hidden << "\ngrid_points_per_dim "
        << cfg.grid_points_per_dim << "\ncandidate_source " << cfg.candidate_source
        << "\nimage_size " << cfg.image_size << "\npixel_corpus " << cfg.pixel_corpus
        << "\nvae_hidden " << cfg.vae_hidden << "\nvae_candidate_batch "
        << cfg.vae_candidate_batch << "\nvae_alpha " << cfg.vae_alpha << "\nseed " << cfg.seed
        << "\ncold_start " << (cfg.cold_start ? 1 : 0) << "\n";
}

}  // namespace paml::harness
