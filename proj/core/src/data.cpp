#include "qmlsec/data.hpp"

#include "qmlsec/errors.hpp"
#include "qmlsec/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

namespace qmlsec {

namespace {

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ','))
        cells.push_back(cell);
    if (!line.empty() && line.back() == ',')
        cells.emplace_back();
    return cells;
}

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r\n");
    if (begin == std::string::npos)
        return {};
    const auto end = s.find_last_not_of(" \t\r\n");
    return s.substr(begin, end - begin + 1);
}

double parse_number(const std::string& cell, std::size_t line_no) {
    const std::string t = trim(cell);
    if (t.empty())
        throw DataError("line " + std::to_string(line_no) + ": empty cell");
    std::size_t pos = 0;
    double value = 0.0;
    try {
        value = std::stod(t, &pos);
    } catch (const std::exception&) {
        throw DataError("line " + std::to_string(line_no) + ": non-numeric value '" + t + "'");
    }
    if (pos != t.size())
        throw DataError("line " + std::to_string(line_no) + ": non-numeric value '" + t + "'");
    return value;
}

std::string format_full(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void shuffle_indices(std::vector<int>& idx, std::mt19937_64& rng) {
    // Fisher-Yates with our own uniform draw so results do not depend on
    // library-specific std::shuffle internals.
    for (std::size_t i = idx.size(); i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(uniform01(rng()) * static_cast<double>(i));
        std::swap(idx[i - 1], idx[std::min(j, i - 1)]);
    }
}

} // namespace

Dataset load_csv(const std::string& path, const std::string& label_column) {
    std::ifstream in(path);
    if (!in)
        throw DataError("cannot open '" + path + "'");

    std::string header;
    if (!std::getline(in, header))
        throw DataError("'" + path + "' is empty");
    const auto columns = split_line(header);
    int label_idx = -1;
    for (std::size_t i = 0; i < columns.size(); ++i) {
        if (trim(columns[i]) == label_column)
            label_idx = static_cast<int>(i);
    }
    if (label_idx < 0)
        throw DataError("'" + path + "' has no column named '" + label_column + "'");

    Dataset ds;
    for (std::size_t i = 0; i < columns.size(); ++i) {
        if (static_cast<int>(i) != label_idx)
            ds.feature_names.push_back(trim(columns[i]));
    }

    std::vector<int> raw_labels;
    std::string line;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty())
            continue;
        const auto cells = split_line(line);
        if (cells.size() != columns.size())
            throw DataError("line " + std::to_string(line_no) + ": expected " +
                            std::to_string(columns.size()) + " cells, got " +
                            std::to_string(cells.size()));
        std::vector<double> row;
        row.reserve(cells.size() - 1);
        int label = 0;
        for (std::size_t i = 0; i < cells.size(); ++i) {
            const double v = parse_number(cells[i], line_no);
            if (static_cast<int>(i) == label_idx) {
                label = static_cast<int>(std::llround(v));
                if (std::abs(v - label) > 1e-9)
                    throw DataError("line " + std::to_string(line_no) +
                                    ": label must be an integer, got '" + trim(cells[i]) + "'");
            } else {
                row.push_back(v);
            }
        }
        ds.features.push_back(std::move(row));
        raw_labels.push_back(label);
    }
    if (ds.features.empty())
        throw DataError("'" + path + "' contains no data rows");

    // Dense re-indexing in sorted original-label order.
    std::map<int, int> remap;
    for (int l : raw_labels)
        remap.emplace(l, 0);
    int next = 0;
    for (auto& [orig, dense] : remap)
        dense = next++;
    ds.labels.reserve(raw_labels.size());
    for (int l : raw_labels)
        ds.labels.push_back(remap[l]);
    ds.class_count = next;
    return ds;
}

void save_csv(const Dataset& dataset, const std::string& path, const std::string& label_column) {
    std::ofstream out(path);
    if (!out)
        throw DataError("cannot write '" + path + "'");
    for (int j = 0; j < dataset.dim(); ++j) {
        if (j < static_cast<int>(dataset.feature_names.size()) && !dataset.feature_names[j].empty())
            out << dataset.feature_names[j];
        else
            out << "f" << j;
        out << ',';
    }
    out << label_column << '\n';
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        for (double v : dataset.features[i])
            out << format_full(v) << ',';
        out << dataset.labels[i] << '\n';
    }
}

Dataset scale_to_angle(Dataset dataset) {
    if (dataset.scaler.fitted)
        throw DataError("scaler already fitted");
    if (dataset.train_indices.empty())
        throw DataError("cannot fit scaler: empty train split");

    const int d = dataset.dim();
    auto& sc = dataset.scaler;
    sc.min.assign(static_cast<std::size_t>(d), 0.0);
    sc.max.assign(static_cast<std::size_t>(d), 0.0);
    for (int j = 0; j < d; ++j) {
        double lo = dataset.features[static_cast<std::size_t>(dataset.train_indices[0])][static_cast<std::size_t>(j)];
        double hi = lo;
        for (int idx : dataset.train_indices) {
            const double v = dataset.features[static_cast<std::size_t>(idx)][static_cast<std::size_t>(j)];
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        sc.min[static_cast<std::size_t>(j)] = lo;
        sc.max[static_cast<std::size_t>(j)] = hi;
    }
    sc.fitted = true;

    const double angle_top = std::nextafter(kTwoPi, 0.0);
    for (auto& row : dataset.features) {
        for (int j = 0; j < d; ++j) {
            const double lo = sc.min[static_cast<std::size_t>(j)];
            const double hi = sc.max[static_cast<std::size_t>(j)];
            double t;
            if (hi == lo) {
                t = kTwoPi / 2.0; // constant feature maps to pi
            } else {
                t = kTwoPi * (row[static_cast<std::size_t>(j)] - lo) / (hi - lo);
            }
            row[static_cast<std::size_t>(j)] = std::clamp(t, 0.0, angle_top);
        }
    }
    return dataset;
}

Dataset split(Dataset dataset, int n_train, int n_test, std::uint64_t seed) {
    const int n = static_cast<int>(dataset.size());
    if (n_train < 0 || n_test < 0 || n_train + n_test > n)
        throw DataError("split sizes exceed dataset size");

    // Per-class index pools, shuffled.
    std::vector<std::vector<int>> pools(static_cast<std::size_t>(dataset.class_count));
    for (int i = 0; i < n; ++i)
        pools[static_cast<std::size_t>(dataset.labels[static_cast<std::size_t>(i)])].push_back(i);
    std::mt19937_64 rng(mix_seed(seed, 0x5917));
    for (auto& pool : pools)
        shuffle_indices(pool, rng);

    // Largest-remainder allocation keeps per-class counts within 1 of exact
    // proportional stratification.
    auto allocate = [&](int want, const std::vector<int>& avail) {
        const int total = std::accumulate(avail.begin(), avail.end(), 0);
        std::vector<int> counts(avail.size(), 0);
        if (want == 0 || total == 0)
            return counts;
        std::vector<std::pair<double, std::size_t>> rema;
        int assigned = 0;
        for (std::size_t c = 0; c < avail.size(); ++c) {
            const double exact = static_cast<double>(want) * avail[c] / total;
            counts[c] = static_cast<int>(exact);
            assigned += counts[c];
            rema.push_back({exact - counts[c], c});
        }
        std::stable_sort(rema.begin(), rema.end(),
                         [](const auto& a, const auto& b) { return a.first > b.first; });
        for (std::size_t r = 0; assigned < want; ++assigned, ++r)
            ++counts[rema[r % rema.size()].second];
        for (std::size_t c = 0; c < avail.size(); ++c) {
            if (counts[c] > avail[c])
                throw DataError("insufficient samples in class " + std::to_string(c) +
                                " for stratified split");
        }
        return counts;
    };

    std::vector<int> avail(pools.size());
    for (std::size_t c = 0; c < pools.size(); ++c)
        avail[c] = static_cast<int>(pools[c].size());
    const auto train_counts = allocate(n_train, avail);
    for (std::size_t c = 0; c < pools.size(); ++c)
        avail[c] -= train_counts[c];
    const auto test_counts = allocate(n_test, avail);

    dataset.train_indices.clear();
    dataset.test_indices.clear();
    for (std::size_t c = 0; c < pools.size(); ++c) {
        for (int i = 0; i < train_counts[c]; ++i)
            dataset.train_indices.push_back(pools[c][static_cast<std::size_t>(i)]);
        for (int i = 0; i < test_counts[c]; ++i)
            dataset.test_indices.push_back(pools[c][static_cast<std::size_t>(train_counts[c] + i)]);
    }
    std::sort(dataset.train_indices.begin(), dataset.train_indices.end());
    std::sort(dataset.test_indices.begin(), dataset.test_indices.end());
    return dataset;
}

Dataset make_blobs(int n, int d, int n_classes, double spread, std::uint64_t seed) {
    if (n < 1 || d < 1 || n_classes < 2)
        throw DataError("make_blobs requires n >= 1, d >= 1, classes >= 2");
    if (spread < 0.0)
        throw DataError("make_blobs spread must be >= 0");

    std::mt19937_64 rng(mix_seed(seed, 0xb10b5));
    std::vector<std::vector<double>> centers(static_cast<std::size_t>(n_classes));
    for (auto& c : centers) {
        c.resize(static_cast<std::size_t>(d));
        for (auto& v : c)
            v = uniform01(rng()) * kTwoPi;
    }

    // Box-Muller on our own uniform draws keeps the sequence independent of
    // library internals.
    auto gauss = [&rng]() {
        double u1 = uniform01(rng());
        const double u2 = uniform01(rng());
        if (u1 <= 0.0)
            u1 = 0x1.0p-53;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
    };

    Dataset ds;
    ds.class_count = n_classes;
    ds.features.reserve(static_cast<std::size_t>(n));
    ds.labels.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const int cls = i % n_classes;
        std::vector<double> row(static_cast<std::size_t>(d));
        for (int j = 0; j < d; ++j)
            row[static_cast<std::size_t>(j)] =
                centers[static_cast<std::size_t>(cls)][static_cast<std::size_t>(j)] + spread * gauss();
        ds.features.push_back(std::move(row));
        ds.labels.push_back(cls);
    }
    return ds;
}

} // namespace qmlsec
