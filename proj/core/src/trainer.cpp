#include "menet/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <thread>

namespace menet {

Adam::Adam(ParamStore& store, AdamConfig cfg) : store_(store), cfg_(cfg) {
    for (const auto& [name, t] : store_.items()) {
        m_.emplace_back(t.size(), 0.0);
        v_.emplace_back(t.size(), 0.0);
    }
}

void Adam::step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t p = 0; p < store_.items().size(); ++p) {
        Tensor t = store_.items()[p].second;
        const std::vector<double>* g = t.grad();
        if (!g) continue;
        std::vector<double>& m = m_[p];
        std::vector<double>& v = v_[p];
        double* x = t.data();
        for (std::size_t i = 0; i < t.size(); ++i) {
            const double gi = (*g)[i];
            m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * gi;
            v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * gi * gi;
            x[i] -= cfg_.lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg_.eps);
        }
    }
}

namespace {

std::vector<LoadedClip> load_all(const DatasetManifest& manifest,
                                 const std::vector<int>& clip_indices) {
    std::vector<LoadedClip> clips;
    clips.reserve(clip_indices.size());
    for (int idx : clip_indices) {
        if (idx < 0 || idx >= static_cast<int>(manifest.clips.size()))
            throw ConfigError("clip index out of range: " + std::to_string(idx));
        clips.push_back(load_clip(manifest, manifest.clips[static_cast<std::size_t>(idx)]));
    }
    return clips;
}

struct ClipResult {
    GradMap grads;
    LossBreakdown loss;
};

// Forward/backward over one batch. Gradient maps are produced per clip and
// folded into the parameter .grad buffers in clip order afterwards, so the
// result does not depend on the worker count.
void run_batch(const Model& model, const std::vector<const LoadedClip*>& batch,
               const LossWeights& weights, int workers, std::vector<ClipResult>& results) {
    results.assign(batch.size(), {});
    const double inv_n = 1.0 / static_cast<double>(batch.size());
    auto process = [&](std::size_t idx) {
        Tape tape;
        results[idx].loss = clip_loss(tape, model, *batch[idx], weights);
        Tensor scaled = scale(tape, results[idx].loss.total_tensor, inv_n);
        tape.backward(scaled, &results[idx].grads);
    };
    if (workers <= 1 || batch.size() <= 1) {
        for (std::size_t i = 0; i < batch.size(); ++i) process(i);
        return;
    }
    const int n_threads = std::min<int>(workers, static_cast<int>(batch.size()));
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(n_threads));
    for (int w = 0; w < n_threads; ++w)
        pool.emplace_back([&, w] {
            for (std::size_t i = static_cast<std::size_t>(w); i < batch.size();
                 i += static_cast<std::size_t>(n_threads))
                process(i);
        });
    for (auto& th : pool) th.join();
}

// Global-norm gradient clipping; returns the pre-clip norm.
double clip_gradients(ParamStore& store, double max_norm) {
    double n2 = 0;
    for (const auto& [name, t] : store.items())
        if (t.grad())
            for (double g : *t.grad()) n2 += g * g;
    const double norm = std::sqrt(n2);
    if (max_norm > 0 && norm > max_norm) {
        const double s = max_norm / norm;
        for (const auto& [name, t] : store.items())
            if (t.grad()) {
                Tensor tt = t;
                for (double& g : tt.grad_vec()) g *= s;
            }
    }
    return norm;
}

void fold_gradients(ParamStore& store, std::vector<ClipResult>& results) {
    store.zero_grad();
    for (ClipResult& r : results) {
        for (const auto& [name, t] : store.items()) {
            auto it = r.grads.find(t.node());
            if (it == r.grads.end()) continue;
            std::vector<double>& g = Tensor(t).grad_vec();
            const std::vector<double>& src = it->second;
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += src[i];
        }
        r.grads.clear();
    }
}

}  // namespace

TrainResult train(Model& model, const DatasetManifest& manifest,
                  const std::vector<int>& clip_indices, const TrainConfig& cfg,
                  std::ostream* progress) {
    if (clip_indices.empty()) throw ConfigError("training set is empty");
    std::vector<LoadedClip> clips = load_all(manifest, clip_indices);
    Adam adam(model.store, cfg.adam);
    Rng rng(cfg.seed);

    std::ofstream log;
    if (!cfg.log_path.empty()) {
        const bool fresh = !std::filesystem::exists(cfg.log_path);
        log.open(cfg.log_path, std::ios::app);
        if (!log) throw ConfigError("cannot open log file: " + cfg.log_path);
        if (fresh) log << "epoch,L_e,L_f,L_m,L\n";
    }

    TrainResult result;
    std::vector<std::size_t> order(clips.size());
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double sum_ce = 0, sum_f = 0, sum_m = 0, sum_total = 0;

        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(cfg.batch)) {
            const std::size_t end =
                std::min(order.size(), start + static_cast<std::size_t>(cfg.batch));
            // Augmentation decisions are drawn sequentially up front so the
            // random stream is identical for any worker count.
            std::vector<LoadedClip> augmented;
            std::vector<const LoadedClip*> batch;
            augmented.reserve(end - start);
            for (std::size_t i = start; i < end; ++i)
                augmented.push_back(
                    augment(clips[order[i]], cfg.augment_train, rng, cfg.crop_hw));
            for (const LoadedClip& c : augmented) batch.push_back(&c);

            std::vector<ClipResult> results;
            run_batch(model, batch, cfg.weights, cfg.workers, results);
            fold_gradients(model.store, results);
            clip_gradients(model.store, cfg.clip_norm);
            adam.step();
            for (const ClipResult& r : results) {
                sum_ce += r.loss.ce;
                sum_f += r.loss.flow;
                sum_m += r.loss.landmark;
                sum_total += r.loss.total;
            }
        }

        const double n = static_cast<double>(clips.size());
        EpochLog el{epoch, sum_ce / n, sum_f / n, sum_m / n, sum_total / n};
        result.epochs.push_back(el);
        if (log)
            log << el.epoch << ',' << el.ce << ',' << el.flow << ',' << el.landmark << ','
                << el.total << '\n'
                << std::flush;
        if (progress)
            *progress << "epoch " << el.epoch << " L=" << el.total << " L_e=" << el.ce
                      << " L_f=" << el.flow << " L_m=" << el.landmark << '\n';

        if (cfg.stop.enabled() &&
            (epoch % cfg.stop_check_every == 0 || epoch == cfg.epochs)) {
            MetricReport r = evaluate(model, manifest, clip_indices, nullptr);
            const bool acc_ok = cfg.stop.min_acc < 0 || r.cls.acc >= cfg.stop.min_acc;
            const bool epe_ok = cfg.stop.max_epe < 0 || r.mean_epe < cfg.stop.max_epe;
            const bool nme_ok = cfg.stop.max_nme < 0 || r.nme < cfg.stop.max_nme;
            if (progress)
                *progress << "  check: acc=" << r.cls.acc << " epe=" << r.mean_epe
                          << " nme=" << r.nme << '\n';
            if (acc_ok && epe_ok && nme_ok) {
                result.final_train_metrics = r;
                result.stopped_early = epoch < cfg.epochs;
                return result;
            }
            result.final_train_metrics = r;
        }
    }
    return result;
}

MetricReport evaluate(const Model& model, const DatasetManifest& manifest,
                      const std::vector<int>& clip_indices, ConfusionCounts* counts_out) {
    std::vector<LoadedClip> clips = load_all(manifest, clip_indices);
    ConfusionCounts counts(model.cfg.n_classes);
    double epe_sum = 0;
    long epe_n = 0;
    double nme_sum = 0;
    long nme_n = 0, failures = 0;
    Rng rng(0);  // unused by test-mode augmentation

    for (const LoadedClip& raw : clips) {
        LoadedClip clip = augment(raw, false, rng, model.cfg.image_hw);
        Tape tape;
        ClipOutputs out = forward_clip(tape, model, clip.frames);
        int pred = 0;
        for (int c = 1; c < model.cfg.n_classes; ++c)
            if (out.logits.at(static_cast<std::size_t>(c)) >
                out.logits.at(static_cast<std::size_t>(pred)))
                pred = c;
        counts.add(pred, clip.label);
        for (std::size_t k = 0; k < out.flows.size(); ++k) {
            epe_sum += flow_epe(out.flows[k], clip.flows[k]);
            ++epe_n;
        }
        for (std::size_t k = 0; k < out.landmarks.size(); ++k) {
            const std::vector<double>& gt = clip.landmarks[k + 1];
            const double d_o = inter_ocular_distance(gt);
            const double nme = landmark_nme(out.landmarks[k].values(), gt, d_o);
            nme_sum += nme;
            if (nme > 10.0) ++failures;
            ++nme_n;
        }
    }

    MetricReport report;
    report.cls = classification_metrics(counts);
    report.mean_epe = epe_n ? epe_sum / static_cast<double>(epe_n) : 0.0;
    report.nme = nme_n ? nme_sum / static_cast<double>(nme_n) : 0.0;
    report.failure_rate = nme_n ? 100.0 * static_cast<double>(failures) / static_cast<double>(nme_n) : 0.0;
    report.n_samples = static_cast<long>(clips.size());
    if (counts_out) *counts_out = counts;
    return report;
}

std::vector<LosoFold> loso_split(const DatasetManifest& manifest) {
    std::vector<std::string> subjects;
    for (const ClipRecord& c : manifest.clips)
        if (std::find(subjects.begin(), subjects.end(), c.subject_id) == subjects.end())
            subjects.push_back(c.subject_id);
    std::sort(subjects.begin(), subjects.end());

    std::vector<LosoFold> folds;
    for (const std::string& s : subjects) {
        LosoFold fold;
        fold.held_out_subject = s;
        for (int i = 0; i < static_cast<int>(manifest.clips.size()); ++i) {
            if (manifest.clips[static_cast<std::size_t>(i)].subject_id == s)
                fold.test_clips.push_back(i);
            else
                fold.train_clips.push_back(i);
        }
        folds.push_back(std::move(fold));
    }
    return folds;
}

MetricReport loso_run(const DatasetManifest& manifest, const ModelConfig& model_cfg,
                      const TrainConfig& cfg, std::ostream* progress) {
    std::vector<LosoFold> folds = loso_split(manifest);
    if (folds.size() < 2) throw ConfigError("leave-one-subject-out needs at least two subjects");

    ConfusionCounts pooled(model_cfg.n_classes);
    double epe_sum = 0, nme_sum = 0, fail_sum = 0;
    long total_clips = 0;

    for (const LosoFold& fold : folds) {
        if (progress) *progress << "fold: hold out " << fold.held_out_subject << '\n';
        Model model = Model::init(model_cfg);
        train(model, manifest, fold.train_clips, cfg, progress);
        ConfusionCounts counts(model_cfg.n_classes);
        MetricReport r = evaluate(model, manifest, fold.test_clips, &counts);
        pooled.merge(counts);
        const double w = static_cast<double>(r.n_samples);
        epe_sum += r.mean_epe * w;
        nme_sum += r.nme * w;
        fail_sum += r.failure_rate * w;
        total_clips += r.n_samples;
        if (progress)
            *progress << "  test acc=" << r.cls.acc << " epe=" << r.mean_epe << " nme=" << r.nme
                      << '\n';
    }

    MetricReport report;
    report.cls = classification_metrics(pooled);
    report.mean_epe = epe_sum / static_cast<double>(total_clips);
    report.nme = nme_sum / static_cast<double>(total_clips);
    report.failure_rate = fail_sum / static_cast<double>(total_clips);
    report.n_samples = total_clips;
    return report;
}

namespace {

constexpr std::uint32_t kCheckpointVersion = 1;

void put_u32(std::ofstream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::ifstream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw FormatError("truncated checkpoint");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void put_f64(std::ofstream& os, double v) {
    std::uint64_t u;
    std::memcpy(&u, &v, 8);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(u >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 8);
}

double get_f64(std::ifstream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    if (!is) throw FormatError("truncated checkpoint");
    std::uint64_t u = 0;
    for (int i = 0; i < 8; ++i) u |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    double v;
    std::memcpy(&v, &u, 8);
    return v;
}

}  // namespace

void save_checkpoint(const ParamStore& store, const std::string& path) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary);
        if (!os) throw ConfigError("cannot write checkpoint: " + path);
        os.write("MNCK", 4);
        put_u32(os, kCheckpointVersion);
        put_u32(os, static_cast<std::uint32_t>(store.size()));
        for (const auto& [name, t] : store.items()) {
            put_u32(os, static_cast<std::uint32_t>(name.size()));
            os.write(name.data(), static_cast<std::streamsize>(name.size()));
            put_u32(os, static_cast<std::uint32_t>(t.rank()));
            for (int d : t.shape()) put_u32(os, static_cast<std::uint32_t>(d));
            for (double v : t.values()) put_f64(os, v);
        }
        if (!os) throw ConfigError("write failed: " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

void load_checkpoint(ParamStore& store, const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("cannot open checkpoint: " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "MNCK", 4) != 0) throw FormatError("bad checkpoint magic");
    if (get_u32(is) != kCheckpointVersion) throw FormatError("unsupported checkpoint version");
    const std::uint32_t count = get_u32(is);
    if (count != store.size())
        throw FormatError("checkpoint holds " + std::to_string(count) + " parameters, expected " +
                          std::to_string(store.size()));
    for (const auto& [name, t] : store.items()) {
        const std::uint32_t len = get_u32(is);
        std::string stored(len, '\0');
        is.read(stored.data(), static_cast<std::streamsize>(len));
        if (!is || stored != name) throw FormatError("checkpoint parameter mismatch: " + stored);
        const std::uint32_t rank = get_u32(is);
        Shape shape(rank);
        for (std::uint32_t i = 0; i < rank; ++i) shape[i] = static_cast<int>(get_u32(is));
        if (shape != t.shape())
            throw FormatError("checkpoint shape mismatch for " + name + ": " + shape_str(shape));
        Tensor dst = t;  // aliases the stored buffer
        for (double& v : dst.values()) v = get_f64(is);
    }
}

}  // namespace menet
