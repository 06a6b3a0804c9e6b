#include "uwbrl/dataset.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string_view>

#include "uwbrl/error.hpp"

namespace uwbrl {

namespace {

constexpr int kFixedColumns = 8;

std::string episode_header() {
    std::string h =
        "timestamp_s,anchor_id,anchor_x_mm,anchor_y_mm,anchor_z_mm,measured_range_mm,true_range_mm,los_flag";
    for (int i = 0; i < kWindowLength; ++i) h += ",cir_" + std::to_string(i);
    return h;
}

std::vector<std::string_view> split(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        out.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

double to_double(std::string_view s, const std::string& where) {
    const std::string tmp(s);
    char* end = nullptr;
    const double v = std::strtod(tmp.c_str(), &end);
    if (tmp.empty() || end != tmp.c_str() + tmp.size()) throw CorruptFile("bad number '" + tmp + "' in " + where);
    return v;
}

int to_int(std::string_view s, const std::string& where) {
    int v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) throw CorruptFile("bad integer '" + std::string(s) + "' in " + where);
    return v;
}

std::string strip_cr(std::string line) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return line;
}

}  // namespace

void write_episode_csv(const Episode& episode, const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "w");
    if (f == nullptr) throw IoError("cannot write " + path);
    std::fprintf(f, "%s\n", episode_header().c_str());
    for (const auto& m : episode.measurements) {
        const Anchor& a = episode.anchor(m.anchor_id);
        std::fprintf(f, "%.9g,%d,%.9g,%.9g,%.9g,%.9g,", m.timestamp, m.anchor_id, a.position.x(), a.position.y(),
                     a.position.z(), m.measured_range_mm);
        if (m.has_ground_truth()) {
            const GroundTruth& t = m.ground_truth();
            std::fprintf(f, "%.9g,%d", t.true_range_mm, t.los ? 1 : 0);
        } else {
            std::fprintf(f, ",");
        }
        for (double v : m.cir.values) std::fprintf(f, ",%.9g", v);
        std::fprintf(f, "\n");
    }
    if (std::fclose(f) != 0) throw IoError("failed writing " + path);
}

Episode read_episode_csv(const std::string& path, double tag_height_mm) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    std::string line;
    if (!std::getline(in, line) || strip_cr(line) != episode_header()) {
        throw CorruptFile(path + ": missing or unexpected header");
    }
    Episode ep;
    ep.tag_height_mm = tag_height_mm;
    std::map<int, Vec3> anchors;
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        line = strip_cr(line);
        if (line.empty()) continue;
        const std::string where = path + ":" + std::to_string(row);
        const auto cells = split(line);
        if (cells.size() != static_cast<std::size_t>(kFixedColumns + kWindowLength)) {
            throw CorruptFile(where + ": expected " + std::to_string(kFixedColumns + kWindowLength) + " columns");
        }
        RangeMeasurement m;
        m.timestamp = to_double(cells[0], where);
        m.anchor_id = to_int(cells[1], where);
        const Vec3 pos(to_double(cells[2], where), to_double(cells[3], where), to_double(cells[4], where));
        if (const auto it = anchors.find(m.anchor_id); it == anchors.end()) {
            anchors.emplace(m.anchor_id, pos);
        } else if (it->second != pos) {
            throw CorruptFile(where + ": anchor " + std::to_string(m.anchor_id) + " changes position");
        }
        m.measured_range_mm = to_double(cells[5], where);
        if (!(m.measured_range_mm > 0.0)) throw CorruptFile(where + ": measured range must be positive");
        if (!cells[6].empty() || !cells[7].empty()) {
            const int los = to_int(cells[7], where);
            if (los != 0 && los != 1) throw CorruptFile(where + ": los_flag must be 0 or 1");
            m.set_ground_truth({to_double(cells[6], where), los == 1});
        }
        for (int i = 0; i < kWindowLength; ++i) {
            m.cir.values[static_cast<std::size_t>(i)] = to_double(cells[static_cast<std::size_t>(kFixedColumns + i)], where);
        }
        ep.measurements.push_back(std::move(m));
    }
    for (const auto& [id, pos] : anchors) ep.anchors.push_back({id, pos});
    return ep;
}

void write_poses_csv(const std::vector<TagPose>& poses, const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "w");
    if (f == nullptr) throw IoError("cannot write " + path);
    std::fprintf(f, "timestamp_s,x_mm,y_mm,z_mm,vx_mm_s,vy_mm_s,vz_mm_s\n");
    for (const auto& p : poses) {
        std::fprintf(f, "%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n", p.timestamp, p.position.x(), p.position.y(),
                     p.position.z(), p.velocity.x(), p.velocity.y(), p.velocity.z());
    }
    if (std::fclose(f) != 0) throw IoError("failed writing " + path);
}

std::vector<TagPose> read_poses_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    std::string line;
    if (!std::getline(in, line) || strip_cr(line) != "timestamp_s,x_mm,y_mm,z_mm,vx_mm_s,vy_mm_s,vz_mm_s") {
        throw CorruptFile(path + ": missing or unexpected header");
    }
    std::vector<TagPose> out;
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        line = strip_cr(line);
        if (line.empty()) continue;
        const std::string where = path + ":" + std::to_string(row);
        const auto cells = split(line);
        if (cells.size() != 7) throw CorruptFile(where + ": expected 7 columns");
        TagPose p;
        p.timestamp = to_double(cells[0], where);
        p.position = Vec3(to_double(cells[1], where), to_double(cells[2], where), to_double(cells[3], where));
        p.velocity = Vec3(to_double(cells[4], where), to_double(cells[5], where), to_double(cells[6], where));
        out.push_back(p);
    }
    return out;
}

}  // namespace uwbrl
