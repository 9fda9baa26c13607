#include "qmlsec/pipeline.hpp"

#include "qmlsec/errors.hpp"

#include "json_io.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>

namespace qmlsec {

namespace fs = std::filesystem;

namespace {

// Single writer per run directory.
class RunLock {
  public:
    explicit RunLock(const fs::path& dir) : path_(dir / ".lock") {
        std::FILE* f = std::fopen(path_.string().c_str(), "wx");
        if (!f)
            throw DataError("run directory is locked (or not writable): " + path_.string());
        std::fclose(f);
    }
    ~RunLock() {
        std::error_code ec;
        fs::remove(path_, ec);
    }
    RunLock(const RunLock&) = delete;
    RunLock& operator=(const RunLock&) = delete;

  private:
    fs::path path_;
};

class StageTimer {
  public:
    StageTimer(const fs::path& dir, std::string stage)
        : dir_(dir), stage_(std::move(stage)), start_(std::chrono::steady_clock::now()) {}
    ~StageTimer() {
        const auto elapsed = std::chrono::duration<double>(
                                 std::chrono::steady_clock::now() - start_)
                                 .count();
        // Timings stay out of report.json so reruns stay byte-identical.
        std::ofstream out(dir_ / "timings.txt", std::ios::app);
        if (out) {
            char buf[64];
            std::snprintf(buf, sizeof(buf), "%s %.3f s\n", stage_.c_str(), elapsed);
            out << buf;
        }
    }

  private:
    fs::path dir_;
    std::string stage_;
    std::chrono::steady_clock::time_point start_;
};

std::string format_full(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

nlohmann::json load_json_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in)
        throw DataError("cannot open '" + path.string() + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("malformed JSON in '" + path.string() + "': " + e.what());
    }
    return j;
}

void write_json_file(const fs::path& path, const nlohmann::json& j) {
    std::ofstream out(path);
    if (!out)
        throw DataError("cannot write '" + path.string() + "'");
    out << j.dump(2) << '\n';
}

nlohmann::json load_report(const fs::path& dir) {
    const fs::path p = dir / "report.json";
    if (!fs::exists(p))
        return nlohmann::json::object();
    return load_json_file(p);
}

void store_report(const fs::path& dir, const nlohmann::json& j) {
    write_json_file(dir / "report.json", j);
}

void write_metrics_csv(const fs::path& path, const TrainReport& report) {
    std::ofstream out(path);
    if (!out)
        throw DataError("cannot write '" + path.string() + "'");
    out << "epoch,mean_loss,train_accuracy\n";
    for (std::size_t e = 0; e < report.epochs.size(); ++e) {
        out << (e + 1) << ',' << format_full(report.epochs[e].mean_loss) << ','
            << format_full(report.epochs[e].train_accuracy) << '\n';
    }
}

struct TruthTable {
    std::vector<std::vector<double>> angles;
    std::vector<int> labels;
};

void write_truth_csv(const fs::path& path, const Dataset& ds, const std::vector<int>& indices) {
    std::ofstream out(path);
    if (!out)
        throw DataError("cannot write '" + path.string() + "'");
    for (int j = 0; j < ds.dim(); ++j)
        out << 'a' << j << ',';
    out << "label\n";
    for (int idx : indices) {
        for (double v : ds.features[static_cast<std::size_t>(idx)])
            out << format_full(v) << ',';
        out << ds.labels[static_cast<std::size_t>(idx)] << '\n';
    }
}

TruthTable read_truth_csv(const fs::path& path) {
    std::ifstream in(path);
    if (!in)
        throw DataError("cannot open '" + path.string() + "'");
    std::string header;
    if (!std::getline(in, header))
        throw DataError("'" + path.string() + "' is empty");
    const std::size_t n_cols =
        1 + static_cast<std::size_t>(std::count(header.begin(), header.end(), ','));
    const std::size_t d = n_cols - 1;

    TruthTable t;
    std::string line;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty())
            continue;
        std::stringstream ss(line);
        std::string cell;
        std::vector<double> row;
        for (std::size_t j = 0; j < d; ++j) {
            if (!std::getline(ss, cell, ','))
                throw DataError("'" + path.string() + "' line " + std::to_string(line_no) +
                                ": short row");
            row.push_back(std::stod(cell));
        }
        if (!std::getline(ss, cell, ','))
            throw DataError("'" + path.string() + "' line " + std::to_string(line_no) +
                            ": short row");
        t.angles.push_back(std::move(row));
        t.labels.push_back(std::stoi(cell));
    }
    return t;
}

const char* view_name(AdversaryView v) {
    return v == AdversaryView::class_probs ? "class_probs" : "expvals";
}

AdversaryView view_from_name(const std::string& name) {
    if (name == "class_probs")
        return AdversaryView::class_probs;
    if (name == "expvals")
        return AdversaryView::expvals;
    throw ConfigError("unknown adversary view '" + name + "'");
}

nlohmann::json run_config_to_json(const RunConfig& cfg) {
    nlohmann::json j;
    j["seed"] = cfg.seed;
    j["dataset"] = {{"kind", cfg.dataset.kind}};
    if (cfg.dataset.kind == "csv") {
        j["dataset"]["path"] = cfg.dataset.path;
        j["dataset"]["label_column"] = cfg.dataset.label_column;
    } else if (cfg.dataset.kind == "blobs") {
        j["dataset"]["n"] = cfg.dataset.blobs_n;
        j["dataset"]["d"] = cfg.dataset.blobs_d;
        j["dataset"]["classes"] = cfg.dataset.blobs_classes;
        j["dataset"]["spread"] = cfg.dataset.blobs_spread;
    }
    j["split"] = {{"n_train", cfg.n_train}, {"n_test", cfg.n_test}};
    j["qnn"] = config_to_json(cfg.qnn);
    j["attack"] = {{"heuristic", cfg.attack.heuristic}, {"view", view_name(cfg.attack.view)}};
    std::vector<std::string> names;
    for (const auto& spec : cfg.ensemble)
        names.emplace_back(classifier_name(spec.kind));
    j["refine"] = {{"k_values", cfg.refine.k_values},
                   {"confidence_threshold", cfg.refine.confidence_threshold},
                   {"max_iterations", cfg.refine.max_iterations},
                   {"classifiers", names}};
    if (cfg.defense) {
        j["defense"] = {{"n_mask_classes", cfg.defense->n_mask_classes},
                        {"user_qubits", cfg.defense->user_qubits},
                        {"alpha", cfg.defense->alpha},
                        {"target_scheme", target_scheme_name(cfg.defense->scheme)}};
    }
    if (!cfg.out_dir.empty())
        j["out_dir"] = cfg.out_dir;
    return j;
}

RunConfig run_config_from_json(const nlohmann::json& j) {
    RunConfig cfg;
    if (!j.contains("seed"))
        throw ConfigError("config must provide a seed (or pass --seed)");
    cfg.seed = j.at("seed").get<std::uint64_t>();

    if (j.contains("dataset")) {
        const auto& d = j.at("dataset");
        cfg.dataset.kind = d.value("kind", "iris");
        cfg.dataset.path = d.value("path", "");
        cfg.dataset.label_column = d.value("label_column", "label");
        cfg.dataset.blobs_n = d.value("n", 120);
        cfg.dataset.blobs_d = d.value("d", 4);
        cfg.dataset.blobs_classes = d.value("classes", 3);
        cfg.dataset.blobs_spread = d.value("spread", 0.5);
    }
    if (j.contains("split")) {
        cfg.n_train = j.at("split").value("n_train", 90);
        cfg.n_test = j.at("split").value("n_test", 60);
    }
    if (j.contains("qnn")) {
        nlohmann::json q = j.at("qnn");
        // Partial documents inherit the iris defaults.
        QnnConfig base;
        base.n_classes = 0;
        q["n_qubits"] = q.value("n_qubits", base.n_qubits);
        q["n_layers"] = q.value("n_layers", base.n_layers);
        q["n_classes"] = q.value("n_classes", 0);
        q["measured_qubits"] = q.value("measured_qubits", std::vector<int>{});
        cfg.qnn = config_from_json(q);
    } else {
        cfg.qnn.n_classes = 0;
        cfg.qnn.measured_qubits.clear();
    }
    if (j.contains("attack")) {
        cfg.attack.heuristic = j.at("attack").value("heuristic", "all");
        cfg.attack.view = view_from_name(j.at("attack").value("view", "class_probs"));
    }
    if (j.contains("refine")) {
        const auto& r = j.at("refine");
        cfg.refine.k_values = r.value("k_values", std::vector<int>{5, 7, 10, 15});
        cfg.refine.confidence_threshold = r.value("confidence_threshold", 0.8);
        cfg.refine.max_iterations = r.value("max_iterations", 5);
        if (r.contains("classifiers")) {
            cfg.ensemble.clear();
            for (const auto& name : r.at("classifiers")) {
                ClassifierSpec spec;
                spec.kind = classifier_from_name(name.get<std::string>());
                for (const auto& def : default_ensemble()) {
                    if (def.kind == spec.kind)
                        spec = def;
                }
                cfg.ensemble.push_back(spec);
            }
        }
    }
    if (j.contains("defense") && !j.at("defense").is_null()) {
        const auto& d = j.at("defense");
        DefenseConfig def;
        def.n_mask_classes = d.value("n_mask_classes", 1);
        def.user_qubits = d.value("user_qubits", std::vector<int>{});
        def.alpha = d.value("alpha", 1.0);
        def.scheme = target_scheme_from_name(d.value("target_scheme", "constant_mask_class"));
        cfg.defense = def;
    }
    cfg.out_dir = j.value("out_dir", "");
    return cfg;
}

// Fills dataset-derived fields and stamps the run seed into the model config.
QnnConfig resolve_qnn(const RunConfig& cfg, const Dataset& ds) {
    QnnConfig q = cfg.qnn;
    q.seed = cfg.seed;
    if (q.n_classes == 0)
        q.n_classes = ds.class_count;
    if (q.n_classes != ds.class_count)
        throw ConfigError("config says " + std::to_string(q.n_classes) +
                          " classes but the dataset has " + std::to_string(ds.class_count));
    if (ds.dim() != q.n_qubits)
        throw ConfigError("dataset has " + std::to_string(ds.dim()) +
                          " features but the model has " + std::to_string(q.n_qubits) +
                          " qubits");
    if (q.measured_qubits.empty()) {
        for (int i = 0; i < std::min(q.n_classes, q.n_qubits); ++i)
            q.measured_qubits.push_back(i);
    }
    q.validate();
    return q;
}

std::vector<int> all_qubits_of(int n) {
    std::vector<int> qs(static_cast<std::size_t>(n));
    std::iota(qs.begin(), qs.end(), 0);
    return qs;
}

std::vector<Heuristic> selected_heuristics(const std::string& selection) {
    if (selection == "all")
        return {Heuristic::majority, Heuristic::weighted_linear, Heuristic::weighted_exp};
    return {heuristic_from_name(selection)};
}

void require_artifact(const fs::path& p, const std::string& produced_by) {
    if (!fs::exists(p))
        throw DataError("missing artifact '" + p.string() + "' (run `" + produced_by +
                        "` first)");
}

int count_wrong_labels(const std::vector<std::vector<double>>& angles,
                       const std::vector<int>& labels, const TruthTable& truth) {
    int wrong = 0;
    for (std::size_t i = 0; i < angles.size(); ++i) {
        bool matched = false;
        for (std::size_t t = 0; t < truth.angles.size(); ++t) {
            if (angles[i].size() != truth.angles[t].size())
                continue;
            bool eq = true;
            for (std::size_t j = 0; j < angles[i].size(); ++j) {
                if (std::abs(angles[i][j] - truth.angles[t][j]) > 1e-9) {
                    eq = false;
                    break;
                }
            }
            if (eq) {
                matched = true;
                if (labels[i] != truth.labels[t])
                    ++wrong;
                break;
            }
        }
        if (!matched)
            ++wrong;
    }
    return wrong;
}

struct RefinedRows {
    LabeledData input;            // all rows with their original labels
    std::vector<int> final_labels;
    std::vector<std::string> actions;
};

RefinedRows read_refined_csv(const fs::path& path) {
    std::ifstream in(path);
    if (!in)
        throw DataError("cannot open '" + path.string() + "'");
    std::string header;
    if (!std::getline(in, header))
        throw DataError("'" + path.string() + "' is empty");
    const std::size_t n_cols =
        1 + static_cast<std::size_t>(std::count(header.begin(), header.end(), ','));
    if (n_cols < 4)
        throw DataError("'" + path.string() + "' is not a refined CSV");
    const std::size_t d = n_cols - 3;

    RefinedRows rows;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty())
            continue;
        std::stringstream ss(line);
        std::string cell;
        std::vector<double> feat;
        for (std::size_t j = 0; j < d; ++j) {
            std::getline(ss, cell, ',');
            feat.push_back(std::stod(cell));
        }
        std::getline(ss, cell, ',');
        rows.input.labels.push_back(std::stoi(cell));
        std::getline(ss, cell, ',');
        rows.final_labels.push_back(std::stoi(cell));
        std::getline(ss, cell, ',');
        rows.actions.push_back(cell);
        rows.input.features.push_back(std::move(feat));
    }
    return rows;
}

nlohmann::json heuristics_json(const HeuristicAccuracies& acc) {
    return {{"majority", acc.majority},
            {"weighted_linear", acc.weighted_linear},
            {"weighted_exp", acc.weighted_exp}};
}

nlohmann::json defense_report_json(const DefenseReport& rep) {
    nlohmann::json j;
    j["adversary_defended"] = heuristics_json(rep.adversary_defended);
    j["adversary_baseline"] = heuristics_json(rep.adversary_baseline);
    j["relative_drop_weighted_exp"] = rep.relative_drop_weighted_exp;
    j["user_train_accuracy"] = rep.user_train_accuracy;
    j["baseline_train_accuracy"] = rep.baseline_train_accuracy;
    j["user_test_accuracy"] =
        rep.user_test_accuracy ? nlohmann::json(*rep.user_test_accuracy) : nlohmann::json();
    j["baseline_test_accuracy"] = rep.baseline_test_accuracy
                                      ? nlohmann::json(*rep.baseline_test_accuracy)
                                      : nlohmann::json();
    j["epochs_to_baseline_accuracy"] = rep.epochs_to_baseline_accuracy
                                           ? nlohmann::json(*rep.epochs_to_baseline_accuracy)
                                           : nlohmann::json();
    return j;
}

} // namespace

void RunConfig::validate() const {
    if (dataset.kind != "iris" && dataset.kind != "csv" && dataset.kind != "blobs")
        throw ConfigError("unknown dataset kind '" + dataset.kind + "'");
    if (dataset.kind == "csv") {
        if (dataset.path.empty())
            throw ConfigError("csv dataset needs a path");
        if (!fs::exists(dataset.path))
            throw DataError("dataset file does not exist: '" + dataset.path + "'");
    }
    if (n_train < 1)
        throw ConfigError("n_train must be >= 1");
    if (n_test < 0)
        throw ConfigError("n_test must be >= 0");
    if (ensemble.size() < 2)
        throw ConfigError("refinement ensemble needs at least two classifiers");
}

RunConfig load_run_config(const std::string& config_path, const CliOverrides& overrides) {
    nlohmann::json j = nlohmann::json::object();
    if (!config_path.empty())
        j = load_json_file(config_path);
    if (overrides.seed)
        j["seed"] = *overrides.seed;
    RunConfig cfg = run_config_from_json(j);
    if (overrides.heuristic)
        cfg.attack.heuristic = *overrides.heuristic;
    if (overrides.view)
        cfg.attack.view = view_from_name(*overrides.view);
    if (overrides.alpha) {
        if (!cfg.defense)
            cfg.defense = DefenseConfig{};
        cfg.defense->alpha = *overrides.alpha;
    }
    if (cfg.attack.heuristic != "all")
        heuristic_from_name(cfg.attack.heuristic); // validates
    cfg.refine.seed = cfg.seed;
    cfg.validate();
    return cfg;
}

RunConfig load_run_config_from_dir(const fs::path& run_dir) {
    const fs::path p = run_dir / "run_config.json";
    require_artifact(p, "train");
    RunConfig cfg = run_config_from_json(load_json_file(p));
    cfg.refine.seed = cfg.seed;
    return cfg;
}

fs::path resolve_run_dir(const RunConfig& config, const std::string& cli_run_dir) {
    if (!cli_run_dir.empty())
        return cli_run_dir;
    if (!config.out_dir.empty())
        return config.out_dir;
    const char* root = std::getenv(kRunRootEnv);
    const fs::path base = root && *root ? fs::path(root) : fs::path("qmlsec-runs");
    return base / ("run-" + std::to_string(config.seed));
}

Dataset prepare_dataset(const RunConfig& config) {
    config.validate();
    Dataset ds;
    if (config.dataset.kind == "iris") {
        ds = iris_dataset();
    } else if (config.dataset.kind == "csv") {
        ds = load_csv(config.dataset.path, config.dataset.label_column);
    } else {
        ds = make_blobs(config.dataset.blobs_n, config.dataset.blobs_d,
                        config.dataset.blobs_classes, config.dataset.blobs_spread,
                        mix_seed(config.seed, 0xb10b));
    }
    ds = split(std::move(ds), config.n_train, config.n_test, config.seed);
    ds = scale_to_angle(std::move(ds));
    return ds;
}

void cmd_train(const RunConfig& config, const fs::path& run_dir) {
    fs::create_directories(run_dir);
    RunLock lock(run_dir);
    StageTimer timer(run_dir, "train");

    Dataset ds = prepare_dataset(config);
    RunConfig resolved = config;
    resolved.qnn = resolve_qnn(config, ds);

    QnnModel model = QnnModel::init(resolved.qnn);
    LogStore store;
    OptimizerState opt;
    const TrainReport report = train(model, ds, &store, nullptr, &opt);

    write_json_file(run_dir / "run_config.json", run_config_to_json(resolved));
    store.save_jsonl((run_dir / "victim_log.jsonl").string());
    save_checkpoint({model, opt}, (run_dir / "checkpoint.json").string());
    write_metrics_csv(run_dir / "metrics.csv", report);
    write_truth_csv(run_dir / "ground_truth.csv", ds, ds.train_indices);
    write_truth_csv(run_dir / "test_set.csv", ds, ds.test_indices);

    nlohmann::json rep = load_report(run_dir);
    rep["train"] = {
        {"epochs", report.epochs.size()},
        {"final_train_accuracy",
         report.epochs.empty() ? 0.0 : report.epochs.back().train_accuracy},
        {"final_mean_loss", report.epochs.empty() ? 0.0 : report.epochs.back().mean_loss},
        {"test_accuracy",
         report.test_accuracy ? nlohmann::json(*report.test_accuracy) : nlohmann::json()},
    };
    store_report(run_dir, rep);
}

void cmd_attack(const fs::path& run_dir, const CliOverrides& overrides) {
    RunLock lock(run_dir);
    StageTimer timer(run_dir, "attack");

    RunConfig cfg = load_run_config_from_dir(run_dir);
    if (overrides.heuristic)
        cfg.attack.heuristic = *overrides.heuristic;
    if (overrides.view)
        cfg.attack.view = view_from_name(*overrides.view);

    require_artifact(run_dir / "victim_log.jsonl", "train");
    require_artifact(run_dir / "ground_truth.csv", "train");
    const LogStore store = LogStore::load_jsonl((run_dir / "victim_log.jsonl").string());
    if (store.empty())
        throw DataError("victim log is empty; train for at least one epoch");
    const TruthTable truth = read_truth_csv(run_dir / "ground_truth.csv");

    const auto heuristics = selected_heuristics(cfg.attack.heuristic);
    const auto qubits = all_qubits_of(cfg.qnn.n_qubits);

    nlohmann::json accuracies;
    ExtractedDataset primary;
    bool have_primary = false;
    for (Heuristic h : heuristics) {
        const auto extracted =
            extract(store, h, cfg.attack.view, qubits, store.max_epoch());
        save_extracted_csv(extracted,
                           (run_dir / (std::string("extracted_") + heuristic_name(h) + ".csv"))
                               .string());
        accuracies[heuristic_name(h)] =
            extraction_accuracy(extracted, truth.angles, truth.labels);
        // Refinement consumes the weighted-exponential extraction when it ran.
        if (h == Heuristic::weighted_exp || !have_primary) {
            primary = extracted;
            have_primary = true;
        }
    }
    save_extracted_csv(primary, (run_dir / "extracted.csv").string());

    nlohmann::json rep = load_report(run_dir);
    rep["attack"] = {
        {"view", view_name(cfg.attack.view)},
        {"heuristic", cfg.attack.heuristic},
        {"accuracies", accuracies},
        {"points", primary.points.size()},
        {"total_epochs", store.max_epoch()},
    };
    store_report(run_dir, rep);
}

void cmd_refine(const fs::path& run_dir) {
    RunLock lock(run_dir);
    StageTimer timer(run_dir, "refine");

    RunConfig cfg = load_run_config_from_dir(run_dir);
    require_artifact(run_dir / "extracted.csv", "attack");
    const ExtractedDataset extracted =
        load_extracted_csv((run_dir / "extracted.csv").string());
    if (extracted.points.empty())
        throw DataError("extracted.csv holds no points");

    LabeledData data;
    data.class_count = std::max(cfg.qnn.n_classes, extracted.label_space);
    for (const auto& p : extracted.points) {
        data.features.push_back(p.angles);
        data.labels.push_back(p.label);
    }

    const RefineReport report = refine(data, cfg.refine, cfg.ensemble);
    save_refined_csv(data, report, (run_dir / "refined.csv").string());

    nlohmann::json iterations = nlohmann::json::array();
    for (const auto& it : report.iterations)
        iterations.push_back(
            {{"flagged", it.flagged}, {"relabeled", it.relabeled}, {"pruned", it.pruned}});

    // Wrong-label bookkeeping against the harness-side ground truth.
    const TruthTable truth = read_truth_csv(run_dir / "ground_truth.csv");
    const int wrong_before = count_wrong_labels(data.features, data.labels, truth);
    std::vector<std::vector<double>> kept_angles;
    std::vector<int> kept_labels;
    for (std::size_t i = 0; i < data.size(); ++i) {
        if (report.provenance[i].action != RefineAction::pruned) {
            kept_angles.push_back(data.features[i]);
            kept_labels.push_back(report.provenance[i].final_label);
        }
    }
    const int wrong_after = count_wrong_labels(kept_angles, kept_labels, truth);
    const double pruned_fraction =
        1.0 - static_cast<double>(kept_angles.size()) / static_cast<double>(data.size());

    nlohmann::json refine_json = {
        {"k_values", cfg.refine.k_values},
        {"confidence_threshold", cfg.refine.confidence_threshold},
        {"max_iterations", cfg.refine.max_iterations},
        {"iterations", iterations},
        {"wrong_before", wrong_before},
        {"wrong_after", wrong_after},
        {"pruned_fraction", pruned_fraction},
        {"points_total", data.size()},
        {"points_kept", kept_angles.size()},
        {"points_pruned", data.size() - kept_angles.size()},
        {"emptied", report.emptied},
    };
    write_json_file(run_dir / "refine_report.json", refine_json);

    nlohmann::json rep = load_report(run_dir);
    rep["refine"] = refine_json;
    store_report(run_dir, rep);
}

void cmd_clone(const fs::path& run_dir) {
    RunLock lock(run_dir);
    StageTimer timer(run_dir, "clone");

    RunConfig cfg = load_run_config_from_dir(run_dir);
    require_artifact(run_dir / "refined.csv", "refine");
    require_artifact(run_dir / "test_set.csv", "train");

    const RefinedRows rows = read_refined_csv(run_dir / "refined.csv");
    Dataset clone_ds;
    clone_ds.class_count = cfg.qnn.n_classes;
    for (std::size_t i = 0; i < rows.input.size(); ++i) {
        if (rows.actions[i] == "pruned")
            continue;
        clone_ds.features.push_back(rows.input.features[i]);
        clone_ds.labels.push_back(rows.final_labels[i]);
    }
    if (clone_ds.features.empty())
        throw DataError("refined dataset is empty; nothing to clone from");

    std::vector<bool> present(static_cast<std::size_t>(cfg.qnn.n_classes), false);
    for (int l : clone_ds.labels) {
        if (l < 0 || l >= cfg.qnn.n_classes)
            throw DataError("refined label " + std::to_string(l) +
                            " outside the victim's class range");
        present[static_cast<std::size_t>(l)] = true;
    }
    for (std::size_t c = 0; c < present.size(); ++c) {
        if (!present[c])
            throw DataError("class " + std::to_string(c) +
                            " is absent from the refined dataset");
    }

    const std::size_t n_train_rows = clone_ds.features.size();
    const TruthTable test = read_truth_csv(run_dir / "test_set.csv");
    for (std::size_t i = 0; i < test.angles.size(); ++i) {
        clone_ds.features.push_back(test.angles[i]);
        clone_ds.labels.push_back(test.labels[i]);
    }
    clone_ds.train_indices.resize(n_train_rows);
    std::iota(clone_ds.train_indices.begin(), clone_ds.train_indices.end(), 0);
    clone_ds.test_indices.resize(test.angles.size());
    std::iota(clone_ds.test_indices.begin(), clone_ds.test_indices.end(),
              static_cast<int>(n_train_rows));

    QnnConfig clone_cfg = cfg.qnn;
    clone_cfg.seed = mix_seed(cfg.seed, 0xc10e);
    QnnModel clone = QnnModel::init(clone_cfg);
    OptimizerState opt;
    const TrainReport report = train(clone, clone_ds, nullptr, nullptr, &opt);

    save_checkpoint({clone, opt}, (run_dir / "clone_checkpoint.json").string());
    write_metrics_csv(run_dir / "clone_metrics.csv", report);

    // The victim's test accuracy is recomputed from its checkpoint so the
    // comparison cannot drift from a stale report entry.
    require_artifact(run_dir / "checkpoint.json", "train");
    const Checkpoint victim = load_checkpoint((run_dir / "checkpoint.json").string());
    Dataset victim_test;
    victim_test.class_count = cfg.qnn.n_classes;
    victim_test.features = test.angles;
    victim_test.labels = test.labels;
    std::vector<int> test_idx(test.angles.size());
    std::iota(test_idx.begin(), test_idx.end(), 0);
    const double victim_test_acc = evaluate_accuracy(victim.model, victim_test, test_idx);
    const double clone_test_acc = report.test_accuracy.value_or(0.0);

    nlohmann::json rep = load_report(run_dir);
    rep["clone"] = {
        {"train_accuracy", report.epochs.empty() ? 0.0 : report.epochs.back().train_accuracy},
        {"test_accuracy", clone_test_acc},
        {"victim_test_accuracy", victim_test_acc},
        {"test_accuracy_gap", victim_test_acc - clone_test_acc},
        {"training_rows", n_train_rows},
    };
    store_report(run_dir, rep);
}

void cmd_defend(const RunConfig& config, const fs::path& run_dir) {
    if (!config.defense)
        throw ConfigError("defend needs a defense block in the config (or --alpha)");
    fs::create_directories(run_dir);
    RunLock lock(run_dir);
    StageTimer timer(run_dir, "defend");

    Dataset ds = prepare_dataset(config);
    RunConfig resolved = config;
    resolved.qnn = resolve_qnn(config, ds);

    // Undefended baseline, same data and seed.
    QnnModel baseline = QnnModel::init(resolved.qnn);
    LogStore baseline_store;
    const TrainReport baseline_report = train(baseline, ds, &baseline_store);

    // Defended run.
    const QnnConfig defended_cfg = make_defended_config(resolved.qnn, *resolved.defense);
    const std::vector<int> targets = assign_adversarial_targets(
        ds.labels, resolved.defense->scheme, resolved.qnn.n_classes,
        resolved.defense->n_mask_classes);
    QnnModel defended = QnnModel::init(defended_cfg);
    LogStore defended_store;
    OptimizerState opt;
    const TrainReport defended_report = train(defended, ds, &defended_store, &targets, &opt);

    write_json_file(run_dir / "run_config.json", run_config_to_json(resolved));
    baseline_store.save_jsonl((run_dir / "baseline_log.jsonl").string());
    defended_store.save_jsonl((run_dir / "defended_log.jsonl").string());
    write_metrics_csv(run_dir / "baseline_metrics.csv", baseline_report);
    write_metrics_csv(run_dir / "defended_metrics.csv", defended_report);
    save_checkpoint({defended, opt}, (run_dir / "defended_checkpoint.json").string());
    write_truth_csv(run_dir / "ground_truth.csv", ds, ds.train_indices);
    write_truth_csv(run_dir / "test_set.csv", ds, ds.test_indices);

    ObservedRun def_run, base_run;
    def_run.log = &defended_store;
    base_run.log = &baseline_store;
    def_run.report = defended_report;
    base_run.report = baseline_report;
    for (int idx : ds.train_indices) {
        def_run.true_angles.push_back(ds.features[static_cast<std::size_t>(idx)]);
        def_run.true_labels.push_back(ds.labels[static_cast<std::size_t>(idx)]);
    }
    base_run.true_angles = def_run.true_angles;
    base_run.true_labels = def_run.true_labels;

    const DefenseReport defense_report =
        evaluate_defense(def_run, base_run, resolved.qnn.n_qubits);
    write_json_file(run_dir / "defense_report.json", defense_report_json(defense_report));

    nlohmann::json rep = load_report(run_dir);
    rep["defense"] = defense_report_json(defense_report);
    rep["defense"]["alpha"] = resolved.defense->alpha;
    rep["defense"]["n_mask_classes"] = resolved.defense->n_mask_classes;
    store_report(run_dir, rep);
}

void cmd_report(const fs::path& run_dir) {
    RunLock lock(run_dir);
    StageTimer timer(run_dir, "report");

    RunConfig cfg = load_run_config_from_dir(run_dir);
    nlohmann::json rep = load_report(run_dir);

    int stages = 0;
    int csvs = 0;

    // Victim learning curve (clone columns when present).
    if (fs::exists(run_dir / "metrics.csv")) {
        ++stages;
        std::ifstream victim(run_dir / "metrics.csv");
        std::ofstream out(run_dir / "fig5_learning_curves.csv");
        std::ifstream clone(run_dir / "clone_metrics.csv");
        const bool have_clone = clone.good();
        out << "epoch,victim_mean_loss,victim_train_accuracy";
        if (have_clone)
            out << ",clone_mean_loss,clone_train_accuracy";
        out << '\n';
        std::string vline, cline;
        std::getline(victim, vline); // headers
        if (have_clone)
            std::getline(clone, cline);
        while (std::getline(victim, vline)) {
            if (vline.empty())
                continue;
            out << vline;
            if (have_clone && std::getline(clone, cline) && !cline.empty()) {
                const auto comma = cline.find(',');
                out << ',' << cline.substr(comma + 1);
            }
            out << '\n';
        }
        ++csvs;
    } else {
        std::cerr << "report: no train stage found (missing metrics.csv)\n";
    }

    // Heuristic accuracy table and the accuracy-vs-training-accuracy curve.
    const bool have_log = fs::exists(run_dir / "victim_log.jsonl") &&
                          fs::exists(run_dir / "ground_truth.csv");
    bool have_attack = false;
    for (Heuristic h :
         {Heuristic::majority, Heuristic::weighted_linear, Heuristic::weighted_exp}) {
        if (fs::exists(run_dir / (std::string("extracted_") + heuristic_name(h) + ".csv")))
            have_attack = true;
    }
    if (have_attack && have_log) {
        ++stages;
        const TruthTable truth = read_truth_csv(run_dir / "ground_truth.csv");
        std::ofstream fig2(run_dir / "fig2_heuristics.csv");
        fig2 << "heuristic,accuracy\n";
        nlohmann::json recomputed;
        for (Heuristic h :
             {Heuristic::majority, Heuristic::weighted_linear, Heuristic::weighted_exp}) {
            const fs::path p =
                run_dir / (std::string("extracted_") + heuristic_name(h) + ".csv");
            if (!fs::exists(p))
                continue;
            const auto extracted = load_extracted_csv(p.string());
            const double acc = extraction_accuracy(extracted, truth.angles, truth.labels);
            fig2 << heuristic_name(h) << ',' << format_full(acc) << '\n';
            recomputed[heuristic_name(h)] = acc;
        }
        if (rep.contains("attack"))
            rep["attack"]["accuracies"] = recomputed;
        ++csvs;

        const LogStore store = LogStore::load_jsonl((run_dir / "victim_log.jsonl").string());
        const auto qubits = all_qubits_of(cfg.qnn.n_qubits);
        std::ifstream metrics(run_dir / "metrics.csv");
        std::vector<double> train_acc;
        if (metrics) {
            std::string line;
            std::getline(metrics, line);
            while (std::getline(metrics, line)) {
                const auto last_comma = line.rfind(',');
                if (last_comma != std::string::npos)
                    train_acc.push_back(std::stod(line.substr(last_comma + 1)));
            }
        }
        std::ofstream fig3(run_dir / "fig3_trend.csv");
        fig3 << "epoch,train_accuracy,majority,weighted_linear,weighted_exp\n";
        for (int e = 1; e <= store.max_epoch(); ++e) {
            const LogStore prefix = store.prefix(e);
            fig3 << e << ',';
            fig3 << (e - 1 < static_cast<int>(train_acc.size())
                         ? format_full(train_acc[static_cast<std::size_t>(e - 1)])
                         : "");
            for (Heuristic h : {Heuristic::majority, Heuristic::weighted_linear,
                                Heuristic::weighted_exp}) {
                const auto extracted = extract(prefix, h, cfg.attack.view, qubits, e);
                fig3 << ','
                     << format_full(
                            extraction_accuracy(extracted, truth.angles, truth.labels));
            }
            fig3 << '\n';
        }
        ++csvs;
    } else {
        std::cerr << "report: no attack stage found (missing extracted_*.csv)\n";
    }

    if (fs::exists(run_dir / "refine_report.json")) {
        ++stages;
        const nlohmann::json refine_json = load_json_file(run_dir / "refine_report.json");
        rep["refine"] = refine_json;
        std::ofstream fig4(run_dir / "fig4_refinement.csv");
        fig4 << "stage,wrong_labels,pruned_points\n";
        fig4 << "extracted," << refine_json.value("wrong_before", 0) << ",0\n";
        fig4 << "refined," << refine_json.value("wrong_after", 0) << ','
             << refine_json.value("points_pruned", 0) << '\n';
        ++csvs;
    } else {
        std::cerr << "report: no refine stage found (missing refine_report.json)\n";
    }

    if (fs::exists(run_dir / "clone_metrics.csv")) {
        ++stages; // clone columns were folded into fig5 above
    } else {
        std::cerr << "report: no clone stage found (missing clone_metrics.csv)\n";
    }

    if (fs::exists(run_dir / "defense_report.json")) {
        ++stages;
        const nlohmann::json d = load_json_file(run_dir / "defense_report.json");
        std::ofstream fig6(run_dir / "fig6_defense.csv");
        fig6 << "metric,baseline,defended\n";
        for (const char* h : {"majority", "weighted_linear", "weighted_exp"}) {
            fig6 << h << ',' << format_full(d.at("adversary_baseline").value(h, 0.0)) << ','
                 << format_full(d.at("adversary_defended").value(h, 0.0)) << '\n';
        }
        fig6 << "user_train_accuracy," << format_full(d.value("baseline_train_accuracy", 0.0))
             << ',' << format_full(d.value("user_train_accuracy", 0.0)) << '\n';
        ++csvs;
    } else {
        std::cerr << "report: no defense stage found (missing defense_report.json)\n";
    }

    if (stages == 0)
        throw DataError("no completed stages found in '" + run_dir.string() + "'");
    rep["stages_found"] = stages;
    rep["plot_csvs"] = csvs;
    store_report(run_dir, rep);
}

} // namespace qmlsec
