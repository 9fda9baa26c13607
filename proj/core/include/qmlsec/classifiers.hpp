#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace qmlsec {

enum class ClassifierKind { logistic_regression, knn, mlp };

struct ClassifierSpec {
    ClassifierKind kind = ClassifierKind::logistic_regression;
    // logistic_regression / mlp
    double lr = 0.1;
    int epochs = 300;
    // knn
    int knn_k = 5;
    // mlp
    int hidden_width = 32;
};

const char* classifier_name(ClassifierKind kind);
ClassifierKind classifier_from_name(const std::string& name);

// Probabilistic multiclass classifier; every predict_proba output is a valid
// distribution over class_count entries.
class Classifier {
  public:
    virtual ~Classifier() = default;
    virtual void fit(const std::vector<std::vector<double>>& features,
                     const std::vector<int>& labels, int class_count,
                     std::uint64_t seed) = 0;
    virtual std::vector<double> predict_proba(const std::vector<double>& x) const = 0;
};

std::unique_ptr<Classifier> make_classifier(const ClassifierSpec& spec);

std::vector<ClassifierSpec> default_ensemble();

} // namespace qmlsec
