#include "menet/metrics.hpp"

#include <cmath>
#include <nlohmann/json.hpp>
#include <sstream>

namespace menet {

void ConfusionCounts::add(int predicted, int label) {
    if (label < 0 || label >= n_classes || predicted < 0 || predicted >= n_classes)
        throw ConfigError("confusion: class index out of range");
    ++total;
    ++per_class[static_cast<std::size_t>(label)];
    if (predicted == label) {
        ++tp[static_cast<std::size_t>(label)];
    } else {
        ++fp[static_cast<std::size_t>(predicted)];
        ++fn[static_cast<std::size_t>(label)];
    }
}

void ConfusionCounts::merge(const ConfusionCounts& other) {
    if (other.n_classes != n_classes) throw ConfigError("confusion: class count mismatch");
    total += other.total;
    for (int j = 0; j < n_classes; ++j) {
        const auto s = static_cast<std::size_t>(j);
        per_class[s] += other.per_class[s];
        tp[s] += other.tp[s];
        fp[s] += other.fp[s];
        fn[s] += other.fn[s];
    }
}

ClassificationMetrics classification_metrics(const ConfusionCounts& c) {
    if (c.total <= 0) throw ConfigError("classification_metrics: empty counts");
    ClassificationMetrics m;
    double correct = 0, wf1 = 0, uf1 = 0, uar = 0;
    for (int j = 0; j < c.n_classes; ++j) {
        const auto s = static_cast<std::size_t>(j);
        correct += static_cast<double>(c.tp[s]);
        const double denom = static_cast<double>(2 * c.tp[s] + c.fp[s] + c.fn[s]);
        const double f1 = denom > 0 ? 2.0 * static_cast<double>(c.tp[s]) / denom : 0.0;
        wf1 += static_cast<double>(c.per_class[s]) / static_cast<double>(c.total) * f1;
        uf1 += f1;
        if (c.per_class[s] > 0) {
            uar += static_cast<double>(c.tp[s]) / static_cast<double>(c.per_class[s]);
        } else {
            m.empty_classes.push_back(j);  // recall of an absent class counts as 0
        }
    }
    m.acc = 100.0 * correct / static_cast<double>(c.total);
    m.wf1 = 100.0 * wf1;
    m.uf1 = 100.0 * uf1 / c.n_classes;
    m.uar = 100.0 * uar / c.n_classes;
    return m;
}

double flow_epe(const Tensor& pred, const Tensor& gt) {
    if (pred.shape() != gt.shape() || pred.rank() != 3 || pred.dim(0) != 2)
        throw DimensionError("flow_epe: fields must both be 2×H×W");
    const std::size_t n = pred.size() / 2;
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double du = pred.at(i) - gt.at(i);
        const double dv = pred.at(n + i) - gt.at(n + i);
        acc += std::sqrt(du * du + dv * dv);
    }
    return acc / static_cast<double>(n);
}

double landmark_nme(const std::vector<double>& pred, const std::vector<double>& gt, double d_o) {
    if (pred.size() != gt.size() || pred.size() % 2 != 0)
        throw DimensionError("landmark_nme: coordinate vectors must match and be even-length");
    if (!(d_o > 0.0)) throw ConfigError("landmark_nme: non-positive inter-ocular distance");
    const std::size_t m = pred.size() / 2;
    double acc = 0.0;
    for (std::size_t s = 0; s < m; ++s) {
        const double dx = pred[2 * s] - gt[2 * s];
        const double dy = pred[2 * s + 1] - gt[2 * s + 1];
        acc += std::sqrt(dx * dx + dy * dy);
    }
    return 100.0 * acc / (static_cast<double>(m) * d_o);
}

double inter_ocular_distance(const std::vector<double>& lm) {
    if (lm.size() != 136) throw DimensionError("inter_ocular_distance: expects 68 landmarks");
    double lx = 0, ly = 0, rx = 0, ry = 0;
    for (int i = 36; i <= 41; ++i) {
        lx += lm[static_cast<std::size_t>(2 * i)];
        ly += lm[static_cast<std::size_t>(2 * i + 1)];
    }
    for (int i = 42; i <= 47; ++i) {
        rx += lm[static_cast<std::size_t>(2 * i)];
        ry += lm[static_cast<std::size_t>(2 * i + 1)];
    }
    const double dx = lx / 6 - rx / 6, dy = ly / 6 - ry / 6;
    return std::sqrt(dx * dx + dy * dy);
}

namespace {
std::string fmt2(double v) {
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(2);
    os << v;
    return os.str();
}
}  // namespace

std::string MetricReport::to_json() const {
    nlohmann::json j;
    j["Acc"] = std::stod(fmt2(cls.acc));
    j["WF1"] = std::stod(fmt2(cls.wf1));
    j["UF1"] = std::stod(fmt2(cls.uf1));
    j["UAR"] = std::stod(fmt2(cls.uar));
    j["EPE"] = mean_epe;
    j["NME"] = std::stod(fmt2(nme));
    j["failure_rate"] = std::stod(fmt2(failure_rate));
    j["n_samples"] = n_samples;
    j["empty_classes"] = cls.empty_classes;
    return j.dump(2);
}

std::string MetricReport::to_text() const {
    std::ostringstream os;
    os << "Acc=" << fmt2(cls.acc) << "\nWF1=" << fmt2(cls.wf1) << "\nUF1=" << fmt2(cls.uf1)
       << "\nUAR=" << fmt2(cls.uar) << "\nEPE=" << mean_epe << "\nNME=" << fmt2(nme)
       << "\nfailure_rate=" << fmt2(failure_rate) << "\nn_samples=" << n_samples << "\n";
    if (!cls.empty_classes.empty()) {
        os << "empty_classes=";
        for (std::size_t i = 0; i < cls.empty_classes.size(); ++i)
            os << (i ? "," : "") << cls.empty_classes[i];
        os << "\n";
    }
    return os.str();
}

}  // namespace menet
