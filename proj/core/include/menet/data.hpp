#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "menet/gradcheck.hpp"
#include "menet/tensor.hpp"

namespace menet {

// ---- file formats ------------------------------------------------------------

// Middlebury .flo: float32 magic 202021.25, int32 width, int32 height, then
// row-major interleaved (u, v) float32 pairs. All little-endian.
void write_flo(const std::string& path, const Tensor& flow);  // flow: 2×H×W (u plane, v plane)
Tensor read_flo(const std::string& path);

// Binary 8-bit grayscale PGM (P5); tensor values in [0, 1].
void write_pgm(const std::string& path, const Tensor& image);  // 1×H×W
Tensor read_pgm(const std::string& path);

// One row per frame, header x0,y0,...,x{m-1},y{m-1}.
void write_landmarks_csv(const std::string& path, const std::vector<std::vector<double>>& rows);
std::vector<std::vector<double>> read_landmarks_csv(const std::string& path);

// ---- manifest ------------------------------------------------------------------

struct ClipRecord {
    std::string clip_id;
    std::string subject_id;
    int class_label = 0;
    std::vector<std::string> frame_paths;  // t paths, relative to the manifest root
    std::string landmarks_path;
    std::vector<std::string> flow_paths;  // t−1 paths
};

struct DatasetManifest {
    int version = 1;
    int n_classes = 0;
    int t = 0;
    int n_landmarks = 0;
    std::vector<ClipRecord> clips;
    std::string root;  // directory holding manifest.json; not serialized

    void validate() const;
};

void save_manifest(const DatasetManifest& m, const std::string& path);
DatasetManifest load_manifest(const std::string& path);

// ---- synthetic face model ---------------------------------------------------------

struct FaceModel {
    double cx, cy;          // face center
    double rx, ry;          // face ellipse radii
    double eye_dx, eye_dy;  // eye center offsets from face center
    double eye_rx, eye_ry;
    double brow_lift, brow_half;
    double nose_drop;
    double mouth_drop, mouth_rx, mouth_ry;
    double bg, skin, eye_dark, brow_dark, nose_dark, mouth_dark;  // gray levels
};

FaceModel random_face(Rng& rng);

// Smooth displacement field: a sum of Gaussian bumps plus a rigid translation,
// scaled by a common amplitude.
struct DeformBump {
    double cx, cy, sigma, dirx, diry;
};

struct DeformField {
    std::vector<DeformBump> bumps;
    double tx = 0.0, ty = 0.0;
    double amp = 0.0;

    std::array<double, 2> displacement(double x, double y) const;
    DeformField scaled(double a) const {
        DeformField f = *this;
        f.amp = a;
        return f;
    }
};

// Continuous (band-limited) face image, gray levels in [0, 255].
double face_intensity(const FaceModel& face, double x, double y);

// Frame k is the base image evaluated through the warp p ↦ p + S(p); values
// scaled to [0, 1].
Tensor render_frame(const FaceModel& face, const DeformField& s, int hw);

// Backward flow F with I_next(p + F(p)) == I_cur(p): solves
// F = S_cur(p) − S_next(p + F) by fixed-point iteration. Returns 2×hw×hw (u, v).
Tensor exact_flow(const DeformField& s_cur, const DeformField& s_next, int hw);

// 68-point landmarks of the rendered frame (x0,y0,...): base landmark
// positions pushed through the inverse warp.
std::vector<double> base_landmarks(const FaceModel& face);
std::vector<double> landmark_positions(const FaceModel& face, const DeformField& s);

// Class-specific deformation directions (unit amplitude); amplitude ramps
// linearly over the clip up to delta pixels at the final frame.
DeformField class_deformation(const FaceModel& face, int class_label, Rng& rng);

struct SynthConfig {
    std::uint64_t seed = 7;
    int n_subjects = 3;
    int clips_per_subject = 4;
    int n_classes = 3;
    int t = 8;
    int frame_hw = 144;
    double max_delta = 8.0;  // peak deformation in pixels; subtle at 128 px
};

// Writes dataset/<subject>/<clip>/{frame_###.pgm, flow_###.flo, landmarks.csv}
// plus manifest.json under out_dir; byte-identical for identical seeds.
DatasetManifest generate_synthetic(const SynthConfig& cfg, const std::string& out_dir);

// ---- clip loading / sampling / augmentation ------------------------------------------

struct LoadedClip {
    std::string clip_id, subject_id;
    int label = 0;
    std::vector<Tensor> frames;                 // t × (1×H×W), values in [0,1]
    std::vector<std::vector<double>> landmarks;  // t rows of 2m coordinates
    std::vector<Tensor> flows;                  // t−1 × (2×H×W)
};

LoadedClip load_clip(const DatasetManifest& m, const ClipRecord& rec);

// Uniform temporal sampling: indices round(i·(L−1)/(t−1)), endpoints included.
std::vector<int> sample_clip_indices(int video_len, int t);

// Train mode: one random crop offset and one flip decision shared by the whole
// clip; test mode: center crop only. Flip mirrors frames, negates the flow u
// component and permutes landmarks by the 68-point left/right table.
LoadedClip augment(const LoadedClip& clip, bool train, Rng& rng, int crop_hw = 128);

// Left/right correspondence for the 68-point convention; table[i] is the
// index that point i maps to under a horizontal mirror.
const std::array<int, 68>& landmark_flip_table();

}  // namespace menet
