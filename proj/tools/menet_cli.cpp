#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "menet/gradcheck.hpp"
#include "menet/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace menet;

namespace {

constexpr int kExitValidation = 1;
constexpr int kExitMissingPath = 2;

[[noreturn]] void missing_path(const std::string& p) {
    std::cerr << "error: path does not exist: " << p << '\n';
    std::exit(kExitMissingPath);
}

std::string manifest_path(const std::string& data) {
    fs::path p(data);
    if (fs::is_directory(p)) p /= "manifest.json";
    if (!fs::exists(p)) missing_path(p.string());
    return p.string();
}

json model_to_json(const ModelConfig& m) {
    return json{{"n_classes", m.n_classes},   {"t", m.t},
                {"n_landmarks", m.n_landmarks}, {"image_hw", m.image_hw},
                {"knn", m.knn},               {"f5c_blocks", m.f5c_blocks},
                {"use_f5c", m.use_f5c},       {"use_fcc", m.use_fcc},
                {"use_ccc", m.use_ccc},       {"use_flow", m.use_flow},
                {"use_landmark", m.use_landmark},
                {"fusion", fusion_to_string(m.fusion)},
                {"seed", m.seed}};
}

void model_from_json(ModelConfig& m, const json& j) {
    m.n_classes = j.value("n_classes", m.n_classes);
    m.t = j.value("t", m.t);
    m.n_landmarks = j.value("n_landmarks", m.n_landmarks);
    m.image_hw = j.value("image_hw", m.image_hw);
    m.knn = j.value("knn", m.knn);
    m.f5c_blocks = j.value("f5c_blocks", m.f5c_blocks);
    m.use_f5c = j.value("use_f5c", m.use_f5c);
    m.use_fcc = j.value("use_fcc", m.use_fcc);
    m.use_ccc = j.value("use_ccc", m.use_ccc);
    m.use_flow = j.value("use_flow", m.use_flow);
    m.use_landmark = j.value("use_landmark", m.use_landmark);
    if (j.contains("fusion")) m.fusion = fusion_from_string(j["fusion"].get<std::string>());
    m.seed = j.value("seed", m.seed);
}

void train_from_json(TrainConfig& t, const json& j) {
    t.adam.lr = j.value("lr", t.adam.lr);
    t.epochs = j.value("epochs", t.epochs);
    t.batch = j.value("batch", t.batch);
    t.workers = j.value("workers", t.workers);
    t.seed = j.value("seed", t.seed);
    t.augment_train = j.value("augment", t.augment_train);
    t.weights.lambda_f = j.value("lambda_f", t.weights.lambda_f);
    t.weights.lambda_m = j.value("lambda_m", t.weights.lambda_m);
}

// Defaults < config file < command-line flags.
struct Settings {
    ModelConfig model;
    TrainConfig train;

    void load_file(const std::string& path) {
        if (!fs::exists(path)) missing_path(path);
        std::ifstream is(path);
        json j;
        try {
            is >> j;
        } catch (const json::exception& e) {
            throw FormatError(std::string("bad config file: ") + e.what());
        }
        if (j.contains("model")) model_from_json(model, j["model"]);
        if (j.contains("train")) train_from_json(train, j["train"]);
    }
};

// Registers the shared model/training flags on a subcommand, bound to s.
void add_model_flags(CLI::App* cmd, Settings& s) {
    cmd->add_option("--fusion", [&s](const std::vector<std::string>& v) {
        s.model.fusion = fusion_from_string(v.back());
        return true;
    }, "feature fusion: concat|add|subtract|frame-features");
    cmd->add_flag("--no-f5c{false}", s.model.use_f5c, "bypass the F5C stage");
    cmd->add_flag("--no-fcc{false}", s.model.use_fcc, "drop the FCC residual");
    cmd->add_flag("--no-ccc{false}", s.model.use_ccc, "drop the CCC residual");
    cmd->add_flag("--no-flow{false}", s.model.use_flow, "disable the optical-flow head");
    cmd->add_flag("--no-landmark{false}", s.model.use_landmark, "disable the landmark head");
    cmd->add_option("--knn", s.model.knn, "channel-graph neighbor count");
    cmd->add_option("--f5c-blocks", s.model.f5c_blocks, "stacked F5C block count");
    cmd->add_option("--model-seed", s.model.seed, "parameter initialization seed");
}

void add_train_flags(CLI::App* cmd, Settings& s) {
    cmd->add_option("--lr", s.train.adam.lr, "Adam learning rate");
    cmd->add_option("--epochs", s.train.epochs, "training epochs");
    cmd->add_option("--batch", s.train.batch, "mini-batch size (clips)");
    cmd->add_option("--workers", s.train.workers, "gradient workers (results are identical for any value)");
    cmd->add_option("--seed", s.train.seed, "shuffle/augmentation seed");
    cmd->add_option("--lambda-f", s.train.weights.lambda_f, "flow loss weight");
    cmd->add_option("--lambda-m", s.train.weights.lambda_m, "landmark loss weight");
    cmd->add_flag("--no-augment{false}", s.train.augment_train, "disable training augmentation");
    cmd->add_option("--stop-acc", s.train.stop.min_acc, "early stop: training accuracy %% at least this");
    cmd->add_option("--stop-epe", s.train.stop.max_epe, "early stop: training EPE below this");
    cmd->add_option("--stop-nme", s.train.stop.max_nme, "early stop: training NME below this");
    cmd->add_option("--stop-every", s.train.stop_check_every, "epochs between early-stop checks");
    cmd->add_option("--clip-norm", s.train.clip_norm, "global gradient-norm cap (<=0 disables)");
}

DatasetManifest open_dataset(const std::string& data, Settings& s) {
    DatasetManifest m = load_manifest(manifest_path(data));
    m.validate();
    s.model.n_classes = m.n_classes;
    s.model.t = m.t;
    s.model.n_landmarks = m.n_landmarks;
    return m;
}

std::vector<int> all_clips(const DatasetManifest& m) {
    std::vector<int> idx(m.clips.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
    return idx;
}

Model load_model(const std::string& checkpoint, Settings& s) {
    if (!fs::exists(checkpoint)) missing_path(checkpoint);
    const fs::path sidecar = fs::path(checkpoint).parent_path() / "model.json";
    if (fs::exists(sidecar)) {
        std::ifstream is(sidecar.string());
        json j;
        is >> j;
        model_from_json(s.model, j);
    }
    Model model = Model::init(s.model);
    load_checkpoint(model.store, checkpoint);
    return model;
}

int cmd_gen_data(const SynthConfig& cfg, const std::string& out) {
    DatasetManifest m = generate_synthetic(cfg, out);
    std::cout << "wrote " << m.clips.size() << " clips (" << cfg.n_subjects << " subjects, "
              << cfg.n_classes << " classes) under " << out << '\n';
    return 0;
}

int cmd_train(Settings& s, const std::string& data, const std::string& out) {
    DatasetManifest manifest = open_dataset(data, s);
    fs::create_directories(out);
    s.train.log_path = (fs::path(out) / "train_log.csv").string();
    Model model = Model::init(s.model);
    std::cout << "parameters: " << model.store.size() << " tensors\n";
    TrainResult r = train(model, manifest, all_clips(manifest), s.train, &std::cout);
    save_checkpoint(model.store, (fs::path(out) / "checkpoint.bin").string());
    std::ofstream(fs::path(out) / "model.json") << model_to_json(s.model).dump(2) << '\n';
    if (r.final_train_metrics) std::cout << r.final_train_metrics->to_text();
    std::cout << "checkpoint: " << (fs::path(out) / "checkpoint.bin").string() << '\n';
    return 0;
}

int cmd_eval(Settings& s, const std::string& data, const std::string& checkpoint, bool as_json) {
    DatasetManifest manifest = open_dataset(data, s);
    Model model = load_model(checkpoint, s);
    MetricReport r = evaluate(model, manifest, all_clips(manifest));
    std::cout << (as_json ? r.to_json() + "\n" : r.to_text());
    return 0;
}

int cmd_loso(Settings& s, const std::string& data, bool as_json) {
    DatasetManifest manifest = open_dataset(data, s);
    MetricReport r = loso_run(manifest, s.model, s.train, &std::cout);
    std::cout << (as_json ? r.to_json() + "\n" : r.to_text());
    return 0;
}

int cmd_infer(Settings& s, const std::string& data, const std::string& checkpoint, int clip_idx) {
    DatasetManifest manifest = open_dataset(data, s);
    if (clip_idx < 0 || clip_idx >= static_cast<int>(manifest.clips.size()))
        throw ConfigError("clip index out of range");
    Model model = load_model(checkpoint, s);
    MetricReport r = evaluate(model, manifest, {clip_idx});
    const ClipRecord& rec = manifest.clips[static_cast<std::size_t>(clip_idx)];
    std::cout << "clip " << rec.clip_id << " subject " << rec.subject_id << " label "
              << rec.class_label << '\n'
              << r.to_text();
    return 0;
}

// ---- gradient sweep --------------------------------------------------------

int cmd_gradcheck(std::uint64_t seed, double tol) {
    Rng rng(seed);
    int failures = 0;
    auto report = [&](const std::string& name, const GradCheckReport& r) {
        const bool ok = r.passed(tol);
        if (!ok) ++failures;
        std::cout << (ok ? "ok   " : "FAIL ") << name << "  max_rel_err=" << r.max_rel_error
                  << '\n';
    };

    report("conv2d", grad_check(
                         [](Tape& t, std::vector<Tensor>& in) {
                             return sum(t, conv2d(t, in[0], in[1], in[2], {2, 2}, {1, 1}));
                         },
                         {random_uniform({3, 6, 6}, rng, -1, 1, true),
                          random_uniform({4, 3, 3, 3}, rng, -0.5, 0.5, true),
                          random_uniform({4}, rng, -0.5, 0.5, true)}));
    report("conv_transpose2d",
           grad_check(
               [](Tape& t, std::vector<Tensor>& in) {
                   return sum(t, conv_transpose2d(t, in[0], in[1], in[2], {2, 2}, {1, 1}));
               },
               {random_uniform({3, 4, 4}, rng, -1, 1, true),
                random_uniform({3, 2, 4, 4}, rng, -0.5, 0.5, true),
                random_uniform({2}, rng, -0.5, 0.5, true)}));
    report("circular_fc", grad_check(
                              [](Tape& t, std::vector<Tensor>& in) {
                                  return sum(t, circular_fc(t, in[0], in[1], EmbedAxis::Vertical));
                              },
                              {random_uniform({3, 5, 4}, rng, -1, 1, true),
                               random_uniform({3, 5}, rng, -1, 1, true)}));
    report("fcc_block", [&] {
        ParamStore store;
        Rng prng(seed + 1);
        FccParams p = FccParams::init(3, 4, 5, prng, store, "fcc");
        std::vector<Tensor> inputs;
        inputs.push_back(random_uniform({3, 4, 5}, rng, -1, 1, true));
        for (const auto& [n, t] : store.items()) inputs.push_back(t);
        return grad_check(
            [&p](Tape& t, std::vector<Tensor>& in) { return sum(t, fcc_block(t, in[0], p)); },
            inputs);
    }());
    report("ccc_forward", [&] {
        ParamStore store;
        Rng prng(seed + 2);
        CccParams p = CccParams::init(4, 3, 3, prng, store, "ccc");
        return grad_check_resampled(
            [&p](Tape& t, std::vector<Tensor>& in) {
                return sum(t, ccc_forward(t, in[0], p, 2));
            },
            [](Rng& r) {
                return std::vector<Tensor>{random_uniform({4, 3, 3}, r, -1, 1, true)};
            },
            rng, tol);
    }());
    report("softmax_ce", grad_check(
                             [](Tape& t, std::vector<Tensor>& in) {
                                 return softmax_ce(t, in[0], 1);
                             },
                             {random_uniform({5}, rng, -2, 2, true)}));
    report("maxpool3d", grad_check_resampled(
                            [](Tape& t, std::vector<Tensor>& in) {
                                return sum(t, maxpool3d(t, in[0], {2, 2, 2}, {2, 2, 2}));
                            },
                            [](Rng& r) {
                                return std::vector<Tensor>{random_uniform({2, 4, 4, 4}, r, -1, 1, true)};
                            },
                            rng, tol));

    std::cout << (failures ? "gradient sweep FAILED\n" : "gradient sweep passed\n");
    return failures ? kExitValidation : 0;
}

// ---- warp demo -------------------------------------------------------------

void hsv_to_rgb(double h, double s, double v, double rgb[3]) {
    const double c = v * s;
    const double hp = h / 60.0;
    const double x = c * (1.0 - std::fabs(std::fmod(hp, 2.0) - 1.0));
    double r = 0, g = 0, b = 0;
    if (hp < 1) { r = c; g = x; }
    else if (hp < 2) { r = x; g = c; }
    else if (hp < 3) { g = c; b = x; }
    else if (hp < 4) { g = x; b = c; }
    else if (hp < 5) { r = x; b = c; }
    else { r = c; b = x; }
    const double m = v - c;
    rgb[0] = r + m; rgb[1] = g + m; rgb[2] = b + m;
}

void write_flow_ppm(const std::string& path, const Tensor& flow) {
    const int h = flow.dim(1), w = flow.dim(2);
    double max_mag = 1e-9;
    for (int i = 0; i < h * w; ++i) {
        const double u = flow.at(static_cast<std::size_t>(i));
        const double v = flow.at(static_cast<std::size_t>(h * w + i));
        max_mag = std::max(max_mag, std::hypot(u, v));
    }
    std::ofstream os(path, std::ios::binary);
    os << "P6\n" << w << ' ' << h << "\n255\n";
    for (int i = 0; i < h * w; ++i) {
        const double u = flow.at(static_cast<std::size_t>(i));
        const double v = flow.at(static_cast<std::size_t>(h * w + i));
        double hue = std::atan2(v, u) * 180.0 / 3.14159265358979323846 + 180.0;
        if (hue >= 360.0) hue -= 360.0;
        double rgb[3];
        hsv_to_rgb(hue, std::hypot(u, v) / max_mag, 1.0, rgb);
        for (double ch : rgb)
            os.put(static_cast<char>(static_cast<int>(std::lround(ch * 255.0))));
    }
}

int cmd_warp_demo(const std::string& out, std::uint64_t seed, int size) {
    fs::create_directories(out);
    Rng rng(seed);
    FaceModel face = random_face(rng);
    face.cx = size / 2.0;
    face.cy = size / 2.0;
    DeformField base = class_deformation(face, 0, rng);
    Tensor cur = render_frame(face, base.scaled(0.0), size);
    Tensor nxt = render_frame(face, base.scaled(1.5), size);
    Tensor flow = exact_flow(base.scaled(0.0), base.scaled(1.5), size);

    // Warp the later frame back onto the earlier one.
    const int hw = size * size;
    Tensor u = Tensor::zeros({size, size});
    Tensor v = Tensor::zeros({size, size});
    for (int i = 0; i < hw; ++i) {
        u.at(static_cast<std::size_t>(i)) = flow.at(static_cast<std::size_t>(i));
        v.at(static_cast<std::size_t>(i)) = flow.at(static_cast<std::size_t>(hw + i));
    }
    Tensor warped = bilinear_sample(nxt, u, v);

    double mae = 0;
    long n = 0;
    for (int y = 2; y < size - 2; ++y)
        for (int x = 2; x < size - 2; ++x) {
            const std::size_t i = static_cast<std::size_t>(y * size + x);
            mae += std::fabs(warped.at(i) - cur.at(i));
            ++n;
        }
    mae /= static_cast<double>(n);

    write_pgm((fs::path(out) / "frame_cur.pgm").string(), cur);
    write_pgm((fs::path(out) / "frame_next.pgm").string(), nxt);
    write_pgm((fs::path(out) / "warped.pgm").string(), warped);
    write_flo((fs::path(out) / "flow.flo").string(), flow);
    write_flow_ppm((fs::path(out) / "flow_color.ppm").string(), flow);
    std::cout << "warp MAE (2 px border excluded): " << mae << '\n';
    std::cout << "images under " << out << '\n';
    return mae < 2.0 / 255.0 ? 0 : kExitValidation;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"micro-expression joint-learning toolkit"};
    app.require_subcommand(1);

    Settings s;
    std::string config_path;
    app.add_option("--config", config_path, "JSON config file (flags override it)");

    // The config file must be applied before flag values land.
    app.callback([&] {});
    for (int i = 1; i < argc; ++i)
        if (std::string(argv[i]) == "--config" && i + 1 < argc) {
            try {
                s.load_file(argv[i + 1]);
            } catch (const std::exception& e) {
                std::cerr << "error: " << e.what() << '\n';
                return kExitValidation;
            }
        }

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "write a synthetic dataset");
    SynthConfig syn;
    std::string gen_out;
    gen->add_option("--out", gen_out, "output directory")->required();
    gen->add_option("--seed", syn.seed);
    gen->add_option("--subjects", syn.n_subjects);
    gen->add_option("--clips-per-subject", syn.clips_per_subject);
    gen->add_option("--classes", syn.n_classes);
    gen->add_option("--frames", syn.t);
    gen->add_option("--size", syn.frame_hw);
    gen->add_option("--max-delta", syn.max_delta);

    // train
    auto* tr = app.add_subcommand("train", "train on every clip of a dataset");
    std::string tr_data, tr_out = "run";
    tr->add_option("--data", tr_data, "dataset directory or manifest")->required();
    tr->add_option("--out", tr_out, "output directory for checkpoint and logs");
    add_model_flags(tr, s);
    add_train_flags(tr, s);

    // eval
    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
    std::string ev_data, ev_ckpt;
    bool ev_json = false;
    ev->add_option("--data", ev_data)->required();
    ev->add_option("--checkpoint", ev_ckpt)->required();
    ev->add_flag("--json", ev_json, "print metrics as JSON");
    add_model_flags(ev, s);

    // loso
    auto* lo = app.add_subcommand("loso", "leave-one-subject-out protocol");
    std::string lo_data;
    bool lo_json = false;
    lo->add_option("--data", lo_data)->required();
    lo->add_flag("--json", lo_json);
    add_model_flags(lo, s);
    add_train_flags(lo, s);

    // gradcheck
    auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient sweep");
    std::uint64_t gc_seed = 11;
    double gc_tol = 1e-4;
    gc->add_option("--seed", gc_seed);
    gc->add_option("--tol", gc_tol);

    // infer
    auto* in = app.add_subcommand("infer", "run one clip through a checkpoint");
    std::string in_data, in_ckpt;
    int in_clip = 0;
    in->add_option("--data", in_data)->required();
    in->add_option("--checkpoint", in_ckpt)->required();
    in->add_option("--clip", in_clip, "clip index within the manifest");
    add_model_flags(in, s);

    // warp-demo
    auto* wd = app.add_subcommand("warp-demo", "render a pair, warp by the true flow");
    std::string wd_out = "warp-demo";
    std::uint64_t wd_seed = 3;
    int wd_size = 96;
    wd->add_option("--out", wd_out);
    wd->add_option("--seed", wd_seed);
    wd->add_option("--size", wd_size);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*gen) return cmd_gen_data(syn, gen_out);
        if (*tr) return cmd_train(s, tr_data, tr_out);
        if (*ev) return cmd_eval(s, ev_data, ev_ckpt, ev_json);
        if (*lo) return cmd_loso(s, lo_data, lo_json);
        if (*gc) return cmd_gradcheck(gc_seed, gc_tol);
        if (*in) return cmd_infer(s, in_data, in_ckpt, in_clip);
        if (*wd) return cmd_warp_demo(wd_out, wd_seed, wd_size);
    } catch (const FormatError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitValidation;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitValidation;
    } catch (const DimensionError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitValidation;
    }
    return 0;
}
