#include <cmath>
#include <filesystem>

#include "menet/data.hpp"

namespace menet {

namespace {

double smoothstep(double z) { return 1.0 / (1.0 + std::exp(-4.0 * z)); }

// Flat-topped radially smooth bump; r2 is the squared normalized radius.
double blob(double r2) { return std::exp(-r2 * r2); }

double uniform(Rng& rng, double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

std::uint64_t mix_key(std::uint64_t seed, const std::string& id) {
    // splitmix64 over the seed and id bytes; keys clips independently so
    // generation order does not matter.
    std::uint64_t h = seed ^ 0x9e3779b97f4a7c15ULL;
    for (unsigned char c : id) {
        h ^= c;
        h *= 0xbf58476d1ce4e5b9ULL;
        h ^= h >> 27;
    }
    h ^= h >> 31;
    return h;
}

}  // namespace

FaceModel random_face(Rng& rng) {
    FaceModel f;
    f.cx = 72.0 + uniform(rng, -2.0, 2.0);
    f.cy = 72.0 + uniform(rng, -2.0, 2.0);
    f.rx = uniform(rng, 40.0, 46.0);
    f.ry = uniform(rng, 52.0, 58.0);
    f.eye_dx = uniform(rng, 28.0, 32.0);
    f.eye_dy = uniform(rng, 12.0, 16.0);
    f.eye_rx = uniform(rng, 6.0, 8.0);
    f.eye_ry = uniform(rng, 3.0, 4.5);
    f.brow_lift = uniform(rng, 6.0, 9.0);
    f.brow_half = uniform(rng, 6.0, 8.0);
    f.nose_drop = uniform(rng, 2.0, 5.0);
    f.mouth_drop = uniform(rng, 22.0, 27.0);
    f.mouth_rx = uniform(rng, 11.0, 15.0);
    f.mouth_ry = uniform(rng, 2.5, 4.0);
    f.bg = uniform(rng, 22.0, 38.0);
    f.skin = uniform(rng, 135.0, 165.0);
    f.eye_dark = uniform(rng, 75.0, 105.0);
    f.brow_dark = uniform(rng, 50.0, 70.0);
    f.nose_dark = uniform(rng, 27.0, 43.0);
    f.mouth_dark = uniform(rng, 70.0, 90.0);
    return f;
}

std::array<double, 2> DeformField::displacement(double x, double y) const {
    double dx = tx, dy = ty;
    for (const auto& b : bumps) {
        const double rx = (x - b.cx) / b.sigma, ry = (y - b.cy) / b.sigma;
        const double g = std::exp(-0.5 * (rx * rx + ry * ry));
        dx += b.dirx * g;
        dy += b.diry * g;
    }
    return {amp * dx, amp * dy};
}

double face_intensity(const FaceModel& f, double x, double y) {
    const double ex = (x - f.cx) / f.rx, ey = (y - f.cy) / f.ry;
    const double edge = std::sqrt(ex * ex + ey * ey) - 1.0;
    double v = f.bg + (f.skin - f.bg) * smoothstep(-edge / 0.05);

    auto eye = [&](double sgn) {
        const double cx = f.cx + sgn * f.eye_dx, cy = f.cy - f.eye_dy;
        const double u = (x - cx) / f.eye_rx, w = (y - cy) / f.eye_ry;
        return blob(u * u + w * w);
    };
    v -= f.eye_dark * (eye(-1.0) + eye(1.0));

    auto brow = [&](double sgn) {
        const double cx = f.cx + sgn * f.eye_dx, cy = f.cy - f.eye_dy - f.brow_lift;
        const double u = (x - cx) / f.brow_half, w = (y - cy) / 1.6;
        return blob(u * u + w * w);
    };
    v -= f.brow_dark * (brow(-1.0) + brow(1.0));

    {
        const double u = (x - f.cx) / 2.2, w = (y - (f.cy + f.nose_drop)) / 7.0;
        v -= f.nose_dark * blob(u * u + w * w);
    }
    {
        const double u = (x - f.cx) / f.mouth_rx, w = (y - (f.cy + f.mouth_drop)) / f.mouth_ry;
        v -= f.mouth_dark * blob(u * u + w * w);
    }
    return std::min(std::max(v, 0.0), 255.0);
}

Tensor render_frame(const FaceModel& face, const DeformField& s, int hw) {
    Tensor frame = Tensor::zeros({1, hw, hw});
    for (int y = 0; y < hw; ++y)
        for (int x = 0; x < hw; ++x) {
            const auto d = s.displacement(x, y);
            frame.at(static_cast<std::size_t>(y) * hw + x) =
                face_intensity(face, x + d[0], y + d[1]) / 255.0;
        }
    return frame;
}

Tensor exact_flow(const DeformField& s_cur, const DeformField& s_next, int hw) {
    Tensor flow = Tensor::zeros({2, hw, hw});
    const std::size_t plane = static_cast<std::size_t>(hw) * hw;
    for (int y = 0; y < hw; ++y)
        for (int x = 0; x < hw; ++x) {
            const auto sc = s_cur.displacement(x, y);
            double fx = 0.0, fy = 0.0;
            for (int it = 0; it < 12; ++it) {
                const auto sn = s_next.displacement(x + fx, y + fy);
                fx = sc[0] - sn[0];
                fy = sc[1] - sn[1];
            }
            flow.at(static_cast<std::size_t>(y) * hw + x) = fx;
            flow.at(plane + static_cast<std::size_t>(y) * hw + x) = fy;
        }
    return flow;
}

std::vector<double> base_landmarks(const FaceModel& f) {
    std::vector<double> lm;
    lm.reserve(136);
    auto push = [&](double x, double y) {
        lm.push_back(x);
        lm.push_back(y);
    };
    constexpr double kPi = 3.14159265358979323846;
    // jaw 0-16: lower half of the face ellipse, left ear to right ear
    for (int i = 0; i <= 16; ++i) {
        const double a = kPi * i / 16.0;
        push(f.cx - f.rx * std::cos(a), f.cy + f.ry * std::sin(a));
    }
    // brows 17-21 (left, outer→inner) and 22-26 (right, inner→outer)
    const double brow_y = f.cy - f.eye_dy - f.brow_lift;
    for (int i = 0; i < 5; ++i)
        push(f.cx - f.eye_dx - f.brow_half + 2.0 * f.brow_half * i / 4.0, brow_y);
    for (int i = 0; i < 5; ++i)
        push(f.cx + f.eye_dx - f.brow_half + 2.0 * f.brow_half * i / 4.0, brow_y);
    // nose bridge 27-30 and base 31-35
    for (int i = 0; i < 4; ++i) push(f.cx, f.cy - 8.0 + 4.0 * i);
    for (int i = 0; i < 5; ++i) push(f.cx - 6.0 + 3.0 * i, f.cy + f.nose_drop + 8.0);
    // eyes 36-41 (left) and 42-47 (right), corner-first hexagons
    auto eye = [&](double sgn) {
        const double cx = f.cx + sgn * f.eye_dx, cy = f.cy - f.eye_dy;
        push(cx - f.eye_rx, cy);
        push(cx - f.eye_rx / 2, cy - f.eye_ry);
        push(cx + f.eye_rx / 2, cy - f.eye_ry);
        push(cx + f.eye_rx, cy);
        push(cx + f.eye_rx / 2, cy + f.eye_ry);
        push(cx - f.eye_rx / 2, cy + f.eye_ry);
    };
    eye(-1.0);
    eye(1.0);
    // mouth: outer ring 48-59, inner ring 60-67
    const double mx = f.cx, my = f.cy + f.mouth_drop;
    for (int i = 0; i < 12; ++i) {
        const double a = kPi - kPi / 6.0 * i;
        push(mx + f.mouth_rx * std::cos(a), my - f.mouth_ry * std::sin(a));
    }
    for (int i = 0; i < 8; ++i) {
        const double a = kPi - kPi / 4.0 * i;
        push(mx + 0.6 * f.mouth_rx * std::cos(a), my - 0.6 * f.mouth_ry * std::sin(a));
    }
    return lm;
}

std::vector<double> landmark_positions(const FaceModel& face, const DeformField& s) {
    std::vector<double> lm = base_landmarks(face);
    for (std::size_t i = 0; i < lm.size(); i += 2) {
        const double qx = lm[i], qy = lm[i + 1];
        double px = qx, py = qy;  // solve p + S(p) = q
        for (int it = 0; it < 20; ++it) {
            const auto d = s.displacement(px, py);
            px = qx - d[0];
            py = qy - d[1];
        }
        lm[i] = px;
        lm[i + 1] = py;
    }
    return lm;
}

DeformField class_deformation(const FaceModel& f, int class_label, Rng& rng) {
    DeformField field;
    // A gentle class-specific rigid drift on top of the local action units —
    // it spreads the class signal over the whole face while staying well
    // below a pixel at typical amplitudes.
    static constexpr double kDrift[5][2] = {
        {0.22, 0.00}, {-0.11, 0.20}, {-0.11, -0.20}, {0.16, 0.16}, {-0.22, 0.00}};
    if (class_label < 0 || class_label > 4)
        throw ConfigError("class_deformation: unsupported class " + std::to_string(class_label));
    field.tx = kDrift[class_label][0];
    field.ty = kDrift[class_label][1];
    const double jx = uniform(rng, -1.0, 1.0), jy = uniform(rng, -1.0, 1.0);
    auto mirrored = [&](double cx, double cy, double sigma, double dirx, double diry) {
        field.bumps.push_back({f.cx - cx + jx, cy + jy, sigma, -dirx, diry});
        field.bumps.push_back({f.cx + cx + jx, cy + jy, sigma, dirx, diry});
    };
    switch (class_label) {
        case 0:  // mouth-corner raise
            mirrored(f.mouth_rx, f.cy + f.mouth_drop, 6.0, 0.0, -1.0);
            break;
        case 1:  // eye narrowing: upper lids pushed down
            mirrored(f.eye_dx, f.cy - f.eye_dy - 2.0, 5.0, 0.0, 1.0);
            break;
        case 2:  // brow raise
            mirrored(f.eye_dx, f.cy - f.eye_dy - f.brow_lift, 6.0, 0.0, -1.0);
            break;
        case 3:  // mouth widening
            mirrored(f.mouth_rx, f.cy + f.mouth_drop, 6.0, 1.0, 0.0);
            break;
        case 4:  // nose scrunch
            field.bumps.push_back({f.cx + jx, f.cy + f.nose_drop + jy, 5.0, 0.0, -1.0});
            break;
        default:
            throw ConfigError("class_deformation: unsupported class " +
                              std::to_string(class_label));
    }
    return field;
}

DatasetManifest generate_synthetic(const SynthConfig& cfg, const std::string& out_dir) {
    if (cfg.n_classes != 3 && cfg.n_classes != 5)
        throw ConfigError("generate_synthetic: n_classes must be 3 or 5");
    if (cfg.n_subjects < 1 || cfg.clips_per_subject < 1 || cfg.t < 2)
        throw ConfigError("generate_synthetic: invalid sizes");

    namespace fs = std::filesystem;
    DatasetManifest manifest;
    manifest.n_classes = cfg.n_classes;
    manifest.t = cfg.t;
    manifest.n_landmarks = 68;
    manifest.root = out_dir;

    for (int si = 0; si < cfg.n_subjects; ++si) {
        char sbuf[8];
        std::snprintf(sbuf, sizeof(sbuf), "s%02d", si);
        const std::string subject_id = sbuf;
        Rng subject_rng(mix_key(cfg.seed, subject_id));
        const FaceModel face = random_face(subject_rng);

        for (int ci = 0; ci < cfg.clips_per_subject; ++ci) {
            char cbuf[16];
            std::snprintf(cbuf, sizeof(cbuf), "%s_c%02d", sbuf, ci);
            ClipRecord rec;
            rec.clip_id = cbuf;
            rec.subject_id = subject_id;
            rec.class_label = (si * cfg.clips_per_subject + ci) % cfg.n_classes;

            Rng clip_rng(mix_key(cfg.seed, rec.clip_id));
            const DeformField base_field = class_deformation(face, rec.class_label, clip_rng);
            const double delta = uniform(clip_rng, 0.6 * cfg.max_delta, cfg.max_delta);

            const std::string rel_dir = subject_id + "/" + rec.clip_id;
            fs::create_directories(fs::path(out_dir) / rel_dir);

            std::vector<DeformField> fields;
            for (int k = 0; k < cfg.t; ++k)
                fields.push_back(base_field.scaled(delta * k / (cfg.t - 1)));

            std::vector<std::vector<double>> landmark_rows;
            for (int k = 0; k < cfg.t; ++k) {
                char fbuf[24];
                std::snprintf(fbuf, sizeof(fbuf), "frame_%03d.pgm", k);
                const std::string rel = rel_dir + "/" + fbuf;
                write_pgm(out_dir + "/" + rel, render_frame(face, fields[static_cast<std::size_t>(k)], cfg.frame_hw));
                rec.frame_paths.push_back(rel);
                landmark_rows.push_back(landmark_positions(face, fields[static_cast<std::size_t>(k)]));
            }
            for (int k = 0; k + 1 < cfg.t; ++k) {
                char fbuf[24];
                std::snprintf(fbuf, sizeof(fbuf), "flow_%03d.flo", k);
                const std::string rel = rel_dir + "/" + fbuf;
                write_flo(out_dir + "/" + rel,
                          exact_flow(fields[static_cast<std::size_t>(k)], fields[static_cast<std::size_t>(k) + 1], cfg.frame_hw));
                rec.flow_paths.push_back(rel);
            }
            rec.landmarks_path = rel_dir + "/landmarks.csv";
            write_landmarks_csv(out_dir + "/" + rec.landmarks_path, landmark_rows);
            manifest.clips.push_back(std::move(rec));
        }
    }
    save_manifest(manifest, out_dir + "/manifest.json");
    return manifest;
}

}  // namespace menet
