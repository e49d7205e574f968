#include <cmath>

#include "menet/data.hpp"

namespace menet {

LoadedClip load_clip(const DatasetManifest& m, const ClipRecord& rec) {
    LoadedClip clip;
    clip.clip_id = rec.clip_id;
    clip.subject_id = rec.subject_id;
    clip.label = rec.class_label;
    for (const auto& p : rec.frame_paths) clip.frames.push_back(read_pgm(m.root + "/" + p));
    for (const auto& p : rec.flow_paths) clip.flows.push_back(read_flo(m.root + "/" + p));
    clip.landmarks = read_landmarks_csv(m.root + "/" + rec.landmarks_path);
    if (clip.landmarks.size() != clip.frames.size())
        throw FormatError("clip " + rec.clip_id + ": landmark row count mismatch");
    return clip;
}

std::vector<int> sample_clip_indices(int video_len, int t) {
    if (t < 2) throw ConfigError("sample_clip_indices: t must be >= 2");
    if (video_len < t)
        throw ConfigError("sample_clip_indices: video of length " + std::to_string(video_len) +
                          " shorter than t=" + std::to_string(t));
    std::vector<int> idx(static_cast<std::size_t>(t));
    for (int i = 0; i < t; ++i)
        idx[static_cast<std::size_t>(i)] =
            static_cast<int>(std::lround(static_cast<double>(i) * (video_len - 1) / (t - 1)));
    return idx;
}

const std::array<int, 68>& landmark_flip_table() {
    static const std::array<int, 68> table = [] {
        std::array<int, 68> t{};
        for (int i = 0; i <= 16; ++i) t[static_cast<std::size_t>(i)] = 16 - i;          // jaw
        for (int i = 17; i <= 26; ++i) t[static_cast<std::size_t>(i)] = 43 - i;         // brows
        for (int i = 27; i <= 30; ++i) t[static_cast<std::size_t>(i)] = i;              // nose bridge
        for (int i = 31; i <= 35; ++i) t[static_cast<std::size_t>(i)] = 66 - i;         // nose base
        const int eye_pairs[6][2] = {{36, 45}, {37, 44}, {38, 43}, {39, 42}, {40, 47}, {41, 46}};
        for (auto& p : eye_pairs) {
            t[static_cast<std::size_t>(p[0])] = p[1];
            t[static_cast<std::size_t>(p[1])] = p[0];
        }
        const int mouth_pairs[8][2] = {{48, 54}, {49, 53}, {50, 52}, {55, 59},
                                       {56, 58}, {60, 64}, {61, 63}, {65, 67}};
        for (auto& p : mouth_pairs) {
            t[static_cast<std::size_t>(p[0])] = p[1];
            t[static_cast<std::size_t>(p[1])] = p[0];
        }
        for (int i : {51, 57, 62, 66}) t[static_cast<std::size_t>(i)] = i;
        return t;
    }();
    return table;
}

namespace {

Tensor crop(const Tensor& x, int oy, int ox, int hw) {
    const int c = x.dim(0), w = x.dim(2);
    Tensor out = Tensor::zeros({c, hw, hw});
    for (int ci = 0; ci < c; ++ci)
        for (int y = 0; y < hw; ++y)
            for (int xx = 0; xx < hw; ++xx)
                out.at((static_cast<std::size_t>(ci) * hw + y) * hw + xx) =
                    x.at((static_cast<std::size_t>(ci) * x.dim(1) + (y + oy)) * w + (xx + ox));
    return out;
}

Tensor flip_image(const Tensor& x) {
    const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
    Tensor out = Tensor::zeros(x.shape());
    for (int ci = 0; ci < c; ++ci)
        for (int y = 0; y < h; ++y)
            for (int xx = 0; xx < w; ++xx)
                out.at((static_cast<std::size_t>(ci) * h + y) * w + xx) =
                    x.at((static_cast<std::size_t>(ci) * h + y) * w + (w - 1 - xx));
    return out;
}

Tensor flip_flow(const Tensor& f) {
    Tensor out = flip_image(f);
    const std::size_t plane = out.size() / 2;
    for (std::size_t i = 0; i < plane; ++i) out.at(i) = -out.at(i);  // u negates
    return out;
}

std::vector<double> flip_landmarks(const std::vector<double>& lm, int width) {
    const auto& table = landmark_flip_table();
    std::vector<double> out(lm.size());
    const std::size_t m = lm.size() / 2;
    for (std::size_t i = 0; i < m; ++i) {
        const std::size_t j = m == 68 ? static_cast<std::size_t>(table[i]) : i;
        out[2 * j] = (width - 1) - lm[2 * i];
        out[2 * j + 1] = lm[2 * i + 1];
    }
    return out;
}

}  // namespace

LoadedClip augment(const LoadedClip& clip, bool train, Rng& rng, int crop_hw) {
    if (clip.frames.empty()) throw ConfigError("augment: empty clip");
    const int h = clip.frames[0].dim(1), w = clip.frames[0].dim(2);
    if (h < crop_hw || w < crop_hw) throw ConfigError("augment: frame smaller than crop size");

    int oy = (h - crop_hw) / 2, ox = (w - crop_hw) / 2;
    bool flip = false;
    if (train) {
        oy = std::uniform_int_distribution<int>(0, h - crop_hw)(rng);
        ox = std::uniform_int_distribution<int>(0, w - crop_hw)(rng);
        flip = std::uniform_int_distribution<int>(0, 1)(rng) == 1;
    }

    LoadedClip out;
    out.clip_id = clip.clip_id;
    out.subject_id = clip.subject_id;
    out.label = clip.label;
    for (const auto& f : clip.frames) {
        Tensor t = crop(f, oy, ox, crop_hw);
        out.frames.push_back(flip ? flip_image(t) : t);
    }
    for (const auto& f : clip.flows) {
        Tensor t = crop(f, oy, ox, crop_hw);
        out.flows.push_back(flip ? flip_flow(t) : t);
    }
    for (const auto& row : clip.landmarks) {
        std::vector<double> lm(row.size());
        for (std::size_t i = 0; i < row.size(); i += 2) {
            lm[i] = row[i] - ox;
            lm[i + 1] = row[i + 1] - oy;
        }
        out.landmarks.push_back(flip ? flip_landmarks(lm, crop_hw) : lm);
    }
    return out;
}

}  // namespace menet
