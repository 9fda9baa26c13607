#include "qmlsec/classifiers.hpp"

#include "qmlsec/errors.hpp"
#include "qmlsec/qnn.hpp"
#include "qmlsec/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace qmlsec {

namespace {

// Shared z-score preprocessing; keeps gradient conditioning independent of
// the raw feature scale.
struct Standardizer {
    std::vector<double> mean;
    std::vector<double> inv_std;

    void fit(const std::vector<std::vector<double>>& x) {
        const std::size_t d = x[0].size();
        mean.assign(d, 0.0);
        inv_std.assign(d, 1.0);
        for (const auto& row : x)
            for (std::size_t j = 0; j < d; ++j)
                mean[j] += row[j];
        for (auto& m : mean)
            m /= static_cast<double>(x.size());
        std::vector<double> var(d, 0.0);
        for (const auto& row : x)
            for (std::size_t j = 0; j < d; ++j)
                var[j] += (row[j] - mean[j]) * (row[j] - mean[j]);
        for (std::size_t j = 0; j < d; ++j) {
            const double sd = std::sqrt(var[j] / static_cast<double>(x.size()));
            inv_std[j] = sd > 1e-12 ? 1.0 / sd : 1.0;
        }
    }

    std::vector<double> apply(const std::vector<double>& row) const {
        std::vector<double> out(row.size());
        for (std::size_t j = 0; j < row.size(); ++j)
            out[j] = (row[j] - mean[j]) * inv_std[j];
        return out;
    }
};

class LogisticRegression final : public Classifier {
  public:
    explicit LogisticRegression(const ClassifierSpec& spec) : spec_(spec) {}

    void fit(const std::vector<std::vector<double>>& features,
             const std::vector<int>& labels, int class_count, std::uint64_t) override {
        if (features.empty())
            throw DataError("classifier fit on empty data");
        scaler_.fit(features);
        n_classes_ = class_count;
        const std::size_t d = features[0].size();
        w_.assign(static_cast<std::size_t>(class_count) * d, 0.0);
        b_.assign(static_cast<std::size_t>(class_count), 0.0);

        std::vector<std::vector<double>> x;
        x.reserve(features.size());
        for (const auto& row : features)
            x.push_back(scaler_.apply(row));

        const double inv_n = 1.0 / static_cast<double>(x.size());
        std::vector<double> gw(w_.size()), gb(b_.size());
        for (int it = 0; it < spec_.epochs; ++it) {
            std::fill(gw.begin(), gw.end(), 0.0);
            std::fill(gb.begin(), gb.end(), 0.0);
            for (std::size_t i = 0; i < x.size(); ++i) {
                const auto p = proba_standardized(x[i]);
                for (int k = 0; k < class_count; ++k) {
                    const double delta = p[static_cast<std::size_t>(k)] -
                                         (k == labels[i] ? 1.0 : 0.0);
                    gb[static_cast<std::size_t>(k)] += delta;
                    for (std::size_t j = 0; j < d; ++j)
                        gw[static_cast<std::size_t>(k) * d + j] += delta * x[i][j];
                }
            }
            for (std::size_t j = 0; j < w_.size(); ++j)
                w_[j] -= spec_.lr * gw[j] * inv_n;
            for (std::size_t j = 0; j < b_.size(); ++j)
                b_[j] -= spec_.lr * gb[j] * inv_n;
        }
    }

    std::vector<double> predict_proba(const std::vector<double>& x) const override {
        return proba_standardized(scaler_.apply(x));
    }

  private:
    std::vector<double> proba_standardized(const std::vector<double>& x) const {
        const std::size_t d = x.size();
        std::vector<double> logits(static_cast<std::size_t>(n_classes_));
        for (int k = 0; k < n_classes_; ++k) {
            double z = b_[static_cast<std::size_t>(k)];
            for (std::size_t j = 0; j < d; ++j)
                z += w_[static_cast<std::size_t>(k) * d + j] * x[j];
            logits[static_cast<std::size_t>(k)] = z;
        }
        return softmax(logits);
    }

    ClassifierSpec spec_;
    Standardizer scaler_;
    int n_classes_ = 0;
    std::vector<double> w_, b_;
};

class Knn final : public Classifier {
  public:
    explicit Knn(const ClassifierSpec& spec) : spec_(spec) {}

    void fit(const std::vector<std::vector<double>>& features,
             const std::vector<int>& labels, int class_count, std::uint64_t) override {
        if (features.empty())
            throw DataError("classifier fit on empty data");
        x_ = features;
        y_ = labels;
        n_classes_ = class_count;
    }

    std::vector<double> predict_proba(const std::vector<double>& x) const override {
        const int k = std::min<int>(spec_.knn_k, static_cast<int>(x_.size()));
        std::vector<std::pair<double, std::size_t>> dist;
        dist.reserve(x_.size());
        for (std::size_t i = 0; i < x_.size(); ++i) {
            double d2 = 0.0;
            for (std::size_t j = 0; j < x.size(); ++j) {
                const double diff = x_[i][j] - x[j];
                d2 += diff * diff;
            }
            dist.push_back({d2, i});
        }
        std::stable_sort(dist.begin(), dist.end());
        std::vector<double> probs(static_cast<std::size_t>(n_classes_), 0.0);
        for (int i = 0; i < k; ++i)
            probs[static_cast<std::size_t>(y_[dist[static_cast<std::size_t>(i)].second])] += 1.0;
        for (auto& p : probs)
            p /= static_cast<double>(k);
        return probs;
    }

  private:
    ClassifierSpec spec_;
    std::vector<std::vector<double>> x_;
    std::vector<int> y_;
    int n_classes_ = 0;
};

// One hidden layer, tanh activation, softmax output, full-batch Adam.
class Mlp final : public Classifier {
  public:
    explicit Mlp(const ClassifierSpec& spec) : spec_(spec) {}

    void fit(const std::vector<std::vector<double>>& features,
             const std::vector<int>& labels, int class_count, std::uint64_t seed) override {
        if (features.empty())
            throw DataError("classifier fit on empty data");
        scaler_.fit(features);
        n_classes_ = class_count;
        d_ = features[0].size();
        h_ = static_cast<std::size_t>(spec_.hidden_width);

        std::vector<std::vector<double>> x;
        x.reserve(features.size());
        for (const auto& row : features)
            x.push_back(scaler_.apply(row));

        std::mt19937_64 rng(mix_seed(seed, 0x3317));
        const double scale = 1.0 / std::sqrt(static_cast<double>(d_));
        w1_.resize(h_ * d_);
        for (auto& w : w1_)
            w = (uniform01(rng()) * 2.0 - 1.0) * scale;
        b1_.assign(h_, 0.0);
        w2_.resize(static_cast<std::size_t>(n_classes_) * h_);
        const double scale2 = 1.0 / std::sqrt(static_cast<double>(h_));
        for (auto& w : w2_)
            w = (uniform01(rng()) * 2.0 - 1.0) * scale2;
        b2_.assign(static_cast<std::size_t>(n_classes_), 0.0);

        AdamState s1, s2, s3, s4;
        const double inv_n = 1.0 / static_cast<double>(x.size());
        std::vector<double> gw1(w1_.size()), gb1(b1_.size()), gw2(w2_.size()), gb2(b2_.size());
        std::vector<double> hidden(h_), dhidden(h_);
        for (int it = 0; it < spec_.epochs; ++it) {
            std::fill(gw1.begin(), gw1.end(), 0.0);
            std::fill(gb1.begin(), gb1.end(), 0.0);
            std::fill(gw2.begin(), gw2.end(), 0.0);
            std::fill(gb2.begin(), gb2.end(), 0.0);
            for (std::size_t i = 0; i < x.size(); ++i) {
                forward_hidden(x[i], hidden);
                const auto p = output_probs(hidden);
                for (int k = 0; k < n_classes_; ++k) {
                    const double delta = p[static_cast<std::size_t>(k)] -
                                         (k == labels[i] ? 1.0 : 0.0);
                    gb2[static_cast<std::size_t>(k)] += delta;
                    for (std::size_t j = 0; j < h_; ++j)
                        gw2[static_cast<std::size_t>(k) * h_ + j] += delta * hidden[j];
                }
                for (std::size_t j = 0; j < h_; ++j) {
                    double back = 0.0;
                    for (int k = 0; k < n_classes_; ++k)
                        back += (p[static_cast<std::size_t>(k)] - (k == labels[i] ? 1.0 : 0.0)) *
                                w2_[static_cast<std::size_t>(k) * h_ + j];
                    dhidden[j] = back * (1.0 - hidden[j] * hidden[j]);
                    gb1[j] += dhidden[j];
                    for (std::size_t m = 0; m < d_; ++m)
                        gw1[j * d_ + m] += dhidden[j] * x[i][m];
                }
            }
            for (auto& g : gw1)
                g *= inv_n;
            for (auto& g : gb1)
                g *= inv_n;
            for (auto& g : gw2)
                g *= inv_n;
            for (auto& g : gb2)
                g *= inv_n;
            adam_step(w1_, gw1, s1, spec_.lr);
            adam_step(b1_, gb1, s2, spec_.lr);
            adam_step(w2_, gw2, s3, spec_.lr);
            adam_step(b2_, gb2, s4, spec_.lr);
        }
    }

    std::vector<double> predict_proba(const std::vector<double>& x) const override {
        std::vector<double> hidden(h_);
        forward_hidden(scaler_.apply(x), hidden);
        return output_probs(hidden);
    }

  private:
    void forward_hidden(const std::vector<double>& x, std::vector<double>& hidden) const {
        for (std::size_t j = 0; j < h_; ++j) {
            double z = b1_[j];
            for (std::size_t m = 0; m < d_; ++m)
                z += w1_[j * d_ + m] * x[m];
            hidden[j] = std::tanh(z);
        }
    }

    std::vector<double> output_probs(const std::vector<double>& hidden) const {
        std::vector<double> logits(static_cast<std::size_t>(n_classes_));
        for (int k = 0; k < n_classes_; ++k) {
            double z = b2_[static_cast<std::size_t>(k)];
            for (std::size_t j = 0; j < h_; ++j)
                z += w2_[static_cast<std::size_t>(k) * h_ + j] * hidden[j];
            logits[static_cast<std::size_t>(k)] = z;
        }
        return softmax(logits);
    }

    ClassifierSpec spec_;
    Standardizer scaler_;
    std::size_t d_ = 0, h_ = 0;
    int n_classes_ = 0;
    std::vector<double> w1_, b1_, w2_, b2_;
};

} // namespace

const char* classifier_name(ClassifierKind kind) {
    switch (kind) {
    case ClassifierKind::logistic_regression:
        return "logistic_regression";
    case ClassifierKind::knn:
        return "knn";
    case ClassifierKind::mlp:
        return "mlp";
    }
    return "unknown";
}

ClassifierKind classifier_from_name(const std::string& name) {
    if (name == "logistic_regression" || name == "logistic")
        return ClassifierKind::logistic_regression;
    if (name == "knn")
        return ClassifierKind::knn;
    if (name == "mlp")
        return ClassifierKind::mlp;
    throw ConfigError("unknown classifier '" + name + "'");
}

std::unique_ptr<Classifier> make_classifier(const ClassifierSpec& spec) {
    switch (spec.kind) {
    case ClassifierKind::logistic_regression:
        return std::make_unique<LogisticRegression>(spec);
    case ClassifierKind::knn:
        return std::make_unique<Knn>(spec);
    case ClassifierKind::mlp:
        return std::make_unique<Mlp>(spec);
    }
    throw ConfigError("unknown classifier kind");
}

std::vector<ClassifierSpec> default_ensemble() {
    ClassifierSpec lr;
    lr.kind = ClassifierKind::logistic_regression;
    lr.lr = 0.5;
    lr.epochs = 300;
    ClassifierSpec knn;
    knn.kind = ClassifierKind::knn;
    knn.knn_k = 5;
    ClassifierSpec mlp;
    mlp.kind = ClassifierKind::mlp;
    mlp.lr = 0.01;
    mlp.epochs = 300;
    mlp.hidden_width = 32;
    return {lr, knn, mlp};
}

} // namespace qmlsec
