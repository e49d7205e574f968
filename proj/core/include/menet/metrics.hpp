#pragma once

#include <string>
#include <vector>

#include "menet/tensor.hpp"

namespace menet {

struct ConfusionCounts {
    int n_classes = 0;
    std::vector<long> per_class;  // N_j
    std::vector<long> tp, fp, fn;
    long total = 0;

    explicit ConfusionCounts(int n = 0)
        : n_classes(n), per_class(static_cast<std::size_t>(n), 0), tp(per_class), fp(per_class), fn(per_class) {}

    void add(int predicted, int label);
    void merge(const ConfusionCounts& other);
};

struct ClassificationMetrics {
    double acc = 0, wf1 = 0, uf1 = 0, uar = 0;       // percent
    std::vector<int> empty_classes;                  // classes with N_j == 0 (recall taken as 0)
};

ClassificationMetrics classification_metrics(const ConfusionCounts& counts);

// Mean over pixels of the endpoint distance between predicted and
// ground-truth flow vectors; both fields are 2×H×W.
double flow_epe(const Tensor& pred, const Tensor& gt);

// Inter-ocular-normalized mean point-to-point error, in percent.
// Landmark vectors are (x0,y0,...); d_o must be positive.
double landmark_nme(const std::vector<double>& pred, const std::vector<double>& gt, double d_o);

// Euclidean distance between the mean of landmarks 36–41 (left eye) and
// 42–47 (right eye) of the 68-point convention.
double inter_ocular_distance(const std::vector<double>& landmarks68);

struct MetricReport {
    ClassificationMetrics cls;
    double mean_epe = 0.0;
    double nme = 0.0;           // percent
    double failure_rate = 0.0;  // percent of samples with NME > 10
    long n_samples = 0;

    std::string to_json() const;
    std::string to_text() const;  // flat key=value lines, percents at 2 decimals
};

}  // namespace menet
