#include <cmath>
#include <cstring>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "menet/data.hpp"

namespace menet {

namespace {

constexpr float kFloMagic = 202021.25f;

template <typename T>
void write_le(std::ostream& os, T v) {
    static_assert(sizeof(T) == 4);
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));  // little-endian host
}

template <typename T>
T read_le(std::istream& is, const std::string& path) {
    T v;
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw FormatError(path + ": truncated file");
    return v;
}

std::ofstream open_out(const std::string& path, std::ios::openmode mode = std::ios::binary) {
    std::ofstream os(path, mode);
    if (!os) throw FormatError("cannot open " + path + " for writing");
    return os;
}

std::ifstream open_in(const std::string& path, std::ios::openmode mode = std::ios::binary) {
    std::ifstream is(path, mode);
    if (!is) throw FormatError("cannot open " + path);
    return is;
}

}  // namespace

void write_flo(const std::string& path, const Tensor& flow) {
    if (flow.rank() != 3 || flow.dim(0) != 2) throw DimensionError("write_flo: flow must be 2×H×W");
    if (!all_finite(flow)) throw FormatError("write_flo: non-finite flow values");
    const int h = flow.dim(1), w = flow.dim(2);
    auto os = open_out(path);
    write_le(os, kFloMagic);
    write_le(os, static_cast<std::int32_t>(w));
    write_le(os, static_cast<std::int32_t>(h));
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    for (std::size_t i = 0; i < plane; ++i) {
        write_le(os, static_cast<float>(flow.at(i)));          // u
        write_le(os, static_cast<float>(flow.at(plane + i)));  // v
    }
}

Tensor read_flo(const std::string& path) {
    auto is = open_in(path);
    const float magic = read_le<float>(is, path);
    if (magic != kFloMagic) throw FormatError(path + ": bad .flo magic");
    const auto w = read_le<std::int32_t>(is, path);
    const auto h = read_le<std::int32_t>(is, path);
    if (w <= 0 || h <= 0 || w > 1 << 16 || h > 1 << 16)
        throw FormatError(path + ": implausible dimensions");
    Tensor flow = Tensor::zeros({2, h, w});
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    for (std::size_t i = 0; i < plane; ++i) {
        flow.at(i) = read_le<float>(is, path);
        flow.at(plane + i) = read_le<float>(is, path);
    }
    return flow;
}

void write_pgm(const std::string& path, const Tensor& image) {
    if (image.rank() != 3 || image.dim(0) != 1) throw DimensionError("write_pgm: image must be 1×H×W");
    const int h = image.dim(1), w = image.dim(2);
    auto os = open_out(path);
    os << "P5\n" << w << " " << h << "\n255\n";
    std::vector<unsigned char> row(static_cast<std::size_t>(w));
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double v = image.at(static_cast<std::size_t>(y) * w + x);
            const double q = std::round(std::min(std::max(v, 0.0), 1.0) * 255.0);
            row[static_cast<std::size_t>(x)] = static_cast<unsigned char>(q);
        }
        os.write(reinterpret_cast<const char*>(row.data()), w);
    }
}

Tensor read_pgm(const std::string& path) {
    auto is = open_in(path);
    std::string magic;
    is >> magic;
    if (magic != "P5") throw FormatError(path + ": not a binary PGM");
    int w = 0, h = 0, maxval = 0;
    is >> w >> h >> maxval;
    if (!is || w <= 0 || h <= 0 || maxval != 255) throw FormatError(path + ": bad PGM header");
    is.get();  // single whitespace after header
    std::vector<unsigned char> buf(static_cast<std::size_t>(w) * h);
    is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!is) throw FormatError(path + ": truncated PGM");
    Tensor image = Tensor::zeros({1, h, w});
    for (std::size_t i = 0; i < buf.size(); ++i) image.at(i) = buf[i] / 255.0;
    return image;
}

void write_landmarks_csv(const std::string& path, const std::vector<std::vector<double>>& rows) {
    if (rows.empty() || rows[0].empty() || rows[0].size() % 2 != 0)
        throw DimensionError("write_landmarks_csv: rows must hold 2m coordinates");
    auto os = open_out(path, std::ios::out);
    const std::size_t m = rows[0].size() / 2;
    for (std::size_t i = 0; i < m; ++i) os << (i ? "," : "") << "x" << i << ",y" << i;
    os << "\n";
    os.precision(17);
    for (const auto& r : rows) {
        if (r.size() != 2 * m) throw DimensionError("write_landmarks_csv: ragged rows");
        for (std::size_t i = 0; i < r.size(); ++i) os << (i ? "," : "") << r[i];
        os << "\n";
    }
}

std::vector<std::vector<double>> read_landmarks_csv(const std::string& path) {
    auto is = open_in(path, std::ios::in);
    std::string line;
    if (!std::getline(is, line)) throw FormatError(path + ": empty landmark file");
    std::vector<std::vector<double>> rows;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
        if (row.empty() || row.size() % 2 != 0) throw FormatError(path + ": bad landmark row");
        rows.push_back(std::move(row));
    }
    return rows;
}

void DatasetManifest::validate() const {
    if (n_classes < 2) throw FormatError("manifest: need at least 2 classes");
    if (t < 2) throw FormatError("manifest: need t >= 2");
    if (clips.empty()) throw FormatError("manifest: no clips");
    for (const auto& c : clips) {
        if (c.subject_id.empty()) throw FormatError("manifest: empty subject id");
        if (c.class_label < 0 || c.class_label >= n_classes)
            throw FormatError("manifest: label out of range in clip " + c.clip_id);
        if (static_cast<int>(c.frame_paths.size()) != t)
            throw FormatError("manifest: frame count mismatch in clip " + c.clip_id);
        if (static_cast<int>(c.flow_paths.size()) != t - 1)
            throw FormatError("manifest: flow count mismatch in clip " + c.clip_id);
    }
}

void save_manifest(const DatasetManifest& m, const std::string& path) {
    m.validate();
    nlohmann::json j;
    j["version"] = m.version;
    j["n_classes"] = m.n_classes;
    j["t"] = m.t;
    j["n_landmarks"] = m.n_landmarks;
    j["clips"] = nlohmann::json::array();
    for (const auto& c : m.clips) {
        nlohmann::json jc;
        jc["clip_id"] = c.clip_id;
        jc["subject_id"] = c.subject_id;
        jc["class_label"] = c.class_label;
        jc["frames"] = c.frame_paths;
        jc["landmarks"] = c.landmarks_path;
        jc["flows"] = c.flow_paths;
        j["clips"].push_back(std::move(jc));
    }
    auto os = open_out(path, std::ios::out);
    os << j.dump(2) << "\n";
}

DatasetManifest load_manifest(const std::string& path) {
    auto is = open_in(path, std::ios::in);
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path + ": invalid JSON: " + e.what());
    }
    DatasetManifest m;
    try {
        m.version = j.at("version").get<int>();
        m.n_classes = j.at("n_classes").get<int>();
        m.t = j.at("t").get<int>();
        m.n_landmarks = j.at("n_landmarks").get<int>();
        for (const auto& jc : j.at("clips")) {
            ClipRecord c;
            c.clip_id = jc.at("clip_id").get<std::string>();
            c.subject_id = jc.at("subject_id").get<std::string>();
            c.class_label = jc.at("class_label").get<int>();
            c.frame_paths = jc.at("frames").get<std::vector<std::string>>();
            c.landmarks_path = jc.at("landmarks").get<std::string>();
            c.flow_paths = jc.at("flows").get<std::vector<std::string>>();
            m.clips.push_back(std::move(c));
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path + ": missing manifest field: " + e.what());
    }
    const auto slash = path.find_last_of('/');
    m.root = slash == std::string::npos ? "." : path.substr(0, slash);
    m.validate();
    return m;
}

}  // namespace menet
