#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace qmlsec {

inline constexpr double kTwoPi = 6.283185307179586476925286766559;

// Per-feature min/max fitted on the train split.
struct Scaler {
    std::vector<double> min;
    std::vector<double> max;
    bool fitted = false;
};

struct Dataset {
    std::vector<std::vector<double>> features;
    std::vector<int> labels; // dense in [0, class_count)
    int class_count = 0;
    std::vector<int> train_indices;
    std::vector<int> test_indices;
    Scaler scaler;
    std::vector<std::string> feature_names;

    std::size_t size() const { return features.size(); }
    int dim() const { return features.empty() ? 0 : static_cast<int>(features[0].size()); }
};

// CSV with a header row; the label column is selected by name and re-indexed
// densely from 0 in sorted original-label order. Throws DataError with the
// offending line number on malformed input.
Dataset load_csv(const std::string& path, const std::string& label_column);

// Full-precision CSV emission; load_csv(save_csv(ds)) round-trips features
// and labels exactly.
void save_csv(const Dataset& dataset, const std::string& path,
              const std::string& label_column = "label");

// Min-max fit on the train split only, then x -> 2pi*(x-min)/(max-min) for
// every row, clamped to [0, 2pi). A constant train feature maps to pi.
Dataset scale_to_angle(Dataset dataset);

// Seeded stratified shuffle split.
Dataset split(Dataset dataset, int n_train, int n_test, std::uint64_t seed);

// Gaussian clusters at seeded random centers in [0, 2pi)^d, labels by cluster.
Dataset make_blobs(int n, int d, int n_classes, double spread, std::uint64_t seed);

// The bundled 150-sample iris table (4 features, 3 classes).
Dataset iris_dataset();

} // namespace qmlsec
