#include "qmlsec/refinery.hpp"

#include "qmlsec/errors.hpp"
#include "qmlsec/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>

namespace qmlsec {

namespace {

int argmax_lowest(const std::vector<double>& values) {
    int best = 0;
    for (int i = 1; i < static_cast<int>(values.size()); ++i) {
        if (values[static_cast<std::size_t>(i)] > values[static_cast<std::size_t>(best)])
            best = i;
    }
    return best;
}

std::vector<std::vector<int>> deal_folds(int n, int k, std::mt19937_64& rng) {
    std::vector<int> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), 0);
    for (std::size_t i = idx.size(); i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(uniform01(rng()) * static_cast<double>(i));
        std::swap(idx[i - 1], idx[std::min(j, i - 1)]);
    }
    std::vector<std::vector<int>> folds(static_cast<std::size_t>(k));
    const int base = n / k;
    const int extra = n % k;
    std::size_t cursor = 0;
    for (int f = 0; f < k; ++f) {
        const int size = base + (f < extra ? 1 : 0);
        for (int i = 0; i < size; ++i)
            folds[static_cast<std::size_t>(f)].push_back(idx[cursor++]);
    }
    return folds;
}

bool partitions_cover_classes(const LabeledData& data,
                              const std::vector<std::vector<int>>& folds) {
    for (std::size_t held = 0; held < folds.size(); ++held) {
        std::vector<bool> seen(static_cast<std::size_t>(data.class_count), false);
        for (std::size_t f = 0; f < folds.size(); ++f) {
            if (f == held)
                continue;
            for (int i : folds[f])
                seen[static_cast<std::size_t>(data.labels[static_cast<std::size_t>(i)])] = true;
        }
        if (!std::all_of(seen.begin(), seen.end(), [](bool b) { return b; }))
            return false;
    }
    return true;
}

} // namespace

void RefineConfig::validate() const {
    if (k_values.empty())
        throw ConfigError("k_values must be nonempty");
    for (int k : k_values) {
        if (k < 2)
            throw ConfigError("every k must be >= 2");
    }
    if (!(confidence_threshold > 0.0 && confidence_threshold < 1.0))
        throw ConfigError("confidence_threshold must be in (0, 1)");
    if (max_iterations < 1)
        throw ConfigError("max_iterations must be >= 1");
}

std::vector<std::vector<int>> kfold_indices(int n, int k, std::uint64_t seed) {
    if (k < 1 || k > n)
        throw DataError("k must satisfy 1 <= k <= n");
    std::mt19937_64 rng(mix_seed(seed, 0xf01d));
    return deal_folds(n, k, rng);
}

std::vector<std::vector<double>> fit_predict_oof(const LabeledData& data,
                                                 const ClassifierSpec& spec, int k,
                                                 std::uint64_t seed) {
    const int n = static_cast<int>(data.size());
    if (k > n)
        throw DataError("k exceeds dataset size");

    auto folds = kfold_indices(n, k, seed);
    if (!partitions_cover_classes(data, folds)) {
        folds = kfold_indices(n, k, mix_seed(seed, 0x5eed));
        if (!partitions_cover_classes(data, folds))
            throw DataError("cannot form folds with every class in each training partition");
    }

    std::vector<std::vector<double>> probs(static_cast<std::size_t>(n));
    for (std::size_t held = 0; held < folds.size(); ++held) {
        LabeledData trainset;
        trainset.class_count = data.class_count;
        for (std::size_t f = 0; f < folds.size(); ++f) {
            if (f == held)
                continue;
            for (int i : folds[f]) {
                trainset.features.push_back(data.features[static_cast<std::size_t>(i)]);
                trainset.labels.push_back(data.labels[static_cast<std::size_t>(i)]);
            }
        }
        auto clf = make_classifier(spec);
        clf->fit(trainset.features, trainset.labels, data.class_count,
                 mix_seed(seed, 0xc1a55 + held));
        for (int i : folds[held])
            probs[static_cast<std::size_t>(i)] =
                clf->predict_proba(data.features[static_cast<std::size_t>(i)]);
    }
    return probs;
}

ClassifierView aggregate_classifier_view(const LabeledData& data, const ClassifierSpec& spec,
                                         const std::vector<int>& k_values, std::uint64_t seed) {
    if (k_values.empty())
        throw ConfigError("k_values must be nonempty");
    const std::size_t n = data.size();
    ClassifierView view;
    view.mean_probs.assign(n, std::vector<double>(static_cast<std::size_t>(data.class_count), 0.0));
    for (std::size_t ki = 0; ki < k_values.size(); ++ki) {
        const auto probs = fit_predict_oof(data, spec, k_values[ki], mix_seed(seed, 0x4b + ki));
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t c = 0; c < view.mean_probs[i].size(); ++c)
                view.mean_probs[i][c] += probs[i][c];
    }
    const double inv = 1.0 / static_cast<double>(k_values.size());
    view.predicted.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (auto& p : view.mean_probs[i])
            p *= inv;
        view.predicted[static_cast<std::size_t>(i)] = argmax_lowest(view.mean_probs[i]);
    }
    return view;
}

std::vector<int> flag_mislabeled(const LabeledData& data,
                                 const std::vector<ClassifierView>& views) {
    if (views.size() < 2)
        throw ConfigError("flagging requires at least two classifiers");
    std::vector<int> flagged;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const bool all_disagree =
            std::all_of(views.begin(), views.end(), [&](const ClassifierView& v) {
                return v.predicted[i] != data.labels[i];
            });
        if (all_disagree)
            flagged.push_back(static_cast<int>(i));
    }
    return flagged;
}

UpdateResult update_or_prune(const LabeledData& data, const std::vector<int>& flagged,
                             const std::vector<ClassifierView>& views, double threshold) {
    UpdateResult res;
    res.new_labels = data.labels;
    res.keep.assign(data.size(), true);
    for (int idx : flagged) {
        const std::size_t i = static_cast<std::size_t>(idx);
        const int candidate = views.front().predicted[i];
        const bool unanimous =
            std::all_of(views.begin(), views.end(), [&](const ClassifierView& v) {
                return v.predicted[i] == candidate;
            });
        if (unanimous) {
            double confidence = 0.0;
            for (const auto& v : views)
                confidence += v.mean_probs[i][static_cast<std::size_t>(candidate)];
            confidence /= static_cast<double>(views.size());
            if (confidence > threshold) {
                res.new_labels[i] = candidate;
                ++res.relabeled;
                continue;
            }
        }
        res.keep[i] = false;
        ++res.pruned;
    }
    return res;
}

RefineReport refine(const LabeledData& data, const RefineConfig& config,
                    const std::vector<ClassifierSpec>& specs) {
    config.validate();
    if (data.size() == 0)
        throw DataError("cannot refine an empty dataset");
    if (specs.size() < 2)
        throw ConfigError("refinement requires at least two classifiers");
    const int max_k = *std::max_element(config.k_values.begin(), config.k_values.end());

    RefineReport report;
    report.provenance.resize(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        report.provenance[i].original_label = data.labels[i];
        report.provenance[i].final_label = data.labels[i];
    }

    // Working copy plus a map back to original row indices.
    LabeledData current = data;
    std::vector<int> origin(data.size());
    std::iota(origin.begin(), origin.end(), 0);

    for (int iter = 0; iter < config.max_iterations; ++iter) {
        if (static_cast<int>(current.size()) < max_k) {
            report.emptied = current.size() == 0;
            break;
        }
        std::vector<ClassifierView> views;
        views.reserve(specs.size());
        for (std::size_t s = 0; s < specs.size(); ++s)
            views.push_back(aggregate_classifier_view(
                current, specs[s], config.k_values,
                mix_seed(config.seed, 0x17e4 + 131 * iter + s)));

        const auto flagged = flag_mislabeled(current, views);
        if (flagged.empty()) {
            report.iterations.push_back({0, 0, 0});
            break;
        }
        const auto update =
            update_or_prune(current, flagged, views, config.confidence_threshold);
        report.iterations.push_back(
            {static_cast<int>(flagged.size()), update.relabeled, update.pruned});

        LabeledData next;
        next.class_count = current.class_count;
        std::vector<int> next_origin;
        for (std::size_t i = 0; i < current.size(); ++i) {
            const int orig = origin[i];
            if (!update.keep[i]) {
                report.provenance[static_cast<std::size_t>(orig)].action = RefineAction::pruned;
                continue;
            }
            if (update.new_labels[i] != current.labels[i])
                report.provenance[static_cast<std::size_t>(orig)].action = RefineAction::relabeled;
            report.provenance[static_cast<std::size_t>(orig)].final_label = update.new_labels[i];
            next.features.push_back(std::move(current.features[i]));
            next.labels.push_back(update.new_labels[i]);
            next_origin.push_back(orig);
        }
        current = std::move(next);
        origin = std::move(next_origin);
        if (current.size() == 0) {
            report.emptied = true;
            break;
        }
    }

    report.final_data = std::move(current);
    return report;
}

const char* refine_action_name(RefineAction a) {
    switch (a) {
    case RefineAction::kept:
        return "kept";
    case RefineAction::relabeled:
        return "relabeled";
    case RefineAction::pruned:
        return "pruned";
    }
    return "unknown";
}

void save_refined_csv(const LabeledData& input, const RefineReport& report,
                      const std::string& path) {
    if (input.size() != report.provenance.size())
        throw InternalError("provenance does not cover the input dataset");
    std::ofstream out(path);
    if (!out)
        throw DataError("cannot write '" + path + "'");
    const std::size_t d = input.size() ? input.features[0].size() : 0;
    for (std::size_t j = 0; j < d; ++j)
        out << 'a' << j << ',';
    out << "original_label,final_label,action\n";
    char buf[32];
    for (std::size_t i = 0; i < input.size(); ++i) {
        for (double v : input.features[i]) {
            std::snprintf(buf, sizeof(buf), "%.17g", v);
            out << buf << ',';
        }
        const auto& p = report.provenance[i];
        out << p.original_label << ',' << p.final_label << ',' << refine_action_name(p.action)
            << '\n';
    }
}

} // namespace qmlsec
