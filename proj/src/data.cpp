#include "gequnet/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <stdexcept>

#include "gequnet/image_io.hpp"

namespace fs = std::filesystem;

namespace gequnet {

namespace {

std::string resolve(const std::string& root, const std::string& rel) {
    return (fs::path(root) / rel).string();
}

Tensor read_mask(const std::string& path) {
    Tensor img = read_png_gray(path);
    for (std::int64_t i = 0; i < img.size(); ++i) img[i] = img[i] >= 0.5f ? 1.0f : 0.0f;
    return img;
}

}  // namespace

DatasetManifest DatasetManifest::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("manifest: cannot open '" + path + "'");
    DatasetManifest m;
    m.root = fs::path(path).parent_path().string();

    std::map<std::string, int> map_index;
    std::string line;
    int lineno = 0;
    bool version_seen = false;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::istringstream ss(line);
        std::string key;
        if (!(ss >> key)) continue;
        auto fail = [&](const std::string& why) {
            throw std::runtime_error("manifest: " + path + ":" + std::to_string(lineno) + ": " + why);
        };
        if (key == "version") {
            int v = 0;
            if (!(ss >> v) || v != 1) fail("unsupported manifest version");
            version_seen = true;
        } else if (key == "setting") {
            if (!(ss >> m.setting)) fail("missing setting value");
            if (m.setting != "DPM_noCars" && m.setting != "IRT_noCars" && m.setting != "DPM_cars")
                fail("unknown setting '" + m.setting + "'");
        } else if (key == "dynamic_range_db") {
            if (!(ss >> m.normalizer.dynamic_range_db)) fail("bad dynamic_range_db");
        } else if (key == "min_pathloss_db") {
            if (!(ss >> m.normalizer.min_pathloss_db)) fail("bad min_pathloss_db");
        } else if (key == "map") {
            MapRec rec;
            if (!(ss >> rec.id >> rec.building_png)) fail("map record needs <id> <png>");
            if (map_index.count(rec.id)) fail("duplicate map id '" + rec.id + "'");
            map_index[rec.id] = static_cast<int>(m.maps.size());
            m.maps.push_back(std::move(rec));
        } else if (key == "cars") {
            std::string id, png;
            if (!(ss >> id >> png)) fail("cars record needs <id> <png>");
            auto it = map_index.find(id);
            if (it == map_index.end()) fail("cars record references unknown map '" + id + "'");
            m.maps[static_cast<std::size_t>(it->second)].car_png = png;
        } else if (key == "tx") {
            TxRec rec;
            std::string id;
            if (!(ss >> id >> rec.row >> rec.col >> rec.target_png))
                fail("tx record needs <id> <row> <col> <png>");
            auto it = map_index.find(id);
            if (it == map_index.end()) fail("tx record references unknown map '" + id + "'");
            rec.map_index = it->second;
            m.txs.push_back(std::move(rec));
        } else {
            fail("unknown record '" + key + "'");
        }
    }
    if (!version_seen) throw std::runtime_error("manifest: '" + path + "' is missing 'version 1'");
    return m;
}

void DatasetManifest::save(const std::string& path) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("manifest: cannot write '" + path + "'");
    out.precision(17);
    out << "# gequnet dataset manifest\n";
    out << "version 1\n";
    out << "setting " << setting << "\n";
    out << "dynamic_range_db " << normalizer.dynamic_range_db << "\n";
    out << "min_pathloss_db " << normalizer.min_pathloss_db << "\n";
    for (const MapRec& rec : maps) {
        out << "map " << rec.id << " " << rec.building_png << "\n";
        if (!rec.car_png.empty()) out << "cars " << rec.id << " " << rec.car_png << "\n";
    }
    for (const TxRec& rec : txs) {
        out << "tx " << maps[static_cast<std::size_t>(rec.map_index)].id << " " << rec.row << " "
            << rec.col << " " << rec.target_png << "\n";
    }
    if (!out) throw std::runtime_error("manifest: write failed for '" + path + "'");
}

Sample load_sample(const DatasetManifest& manifest, std::size_t index) {
    if (index >= manifest.txs.size()) throw std::out_of_range("load_sample: index out of range");
    const auto& tx = manifest.txs[index];
    const auto& map = manifest.maps[static_cast<std::size_t>(tx.map_index)];

    Sample s;
    s.map_id = map.id;
    s.building = read_mask(resolve(manifest.root, map.building_png));
    s.target = read_png_gray(resolve(manifest.root, tx.target_png));
    if (!s.building.same_shape(s.target))
        throw std::runtime_error("dataset: size mismatch between '" + map.building_png + "' and '" +
                                 tx.target_png + "'");
    if (!map.car_png.empty()) {
        s.cars = read_mask(resolve(manifest.root, map.car_png));
        if (!s.cars->same_shape(s.building))
            throw std::runtime_error("dataset: size mismatch between '" + map.building_png +
                                     "' and '" + map.car_png + "'");
    }
    s.tx_row = tx.row;
    s.tx_col = tx.col;
    if (tx.row < 0 || tx.row >= s.building.dim(0) || tx.col < 0 || tx.col >= s.building.dim(1))
        throw std::runtime_error("dataset: transmitter (" + std::to_string(tx.row) + "," +
                                 std::to_string(tx.col) + ") outside '" + map.building_png + "'");
    return s;
}

std::vector<Sample> load_dataset(const DatasetManifest& manifest) {
    std::vector<Sample> samples;
    samples.reserve(manifest.size());
    for (std::size_t i = 0; i < manifest.size(); ++i) samples.push_back(load_sample(manifest, i));
    return samples;
}

std::array<DatasetManifest, 3> split_by_map(const DatasetManifest& manifest,
                                            std::array<int, 3> counts) {
    const int need = counts[0] + counts[1] + counts[2];
    if (static_cast<int>(manifest.maps.size()) < need)
        throw std::invalid_argument("split_by_map: need " + std::to_string(need) + " maps, have " +
                                    std::to_string(manifest.maps.size()));
    std::array<DatasetManifest, 3> out;
    int next = 0;
    std::vector<std::pair<int, int>> assign(manifest.maps.size(), {-1, -1});  // split, new index
    for (int s = 0; s < 3; ++s) {
        out[static_cast<std::size_t>(s)].root = manifest.root;
        out[static_cast<std::size_t>(s)].setting = manifest.setting;
        out[static_cast<std::size_t>(s)].normalizer = manifest.normalizer;
        for (int i = 0; i < counts[static_cast<std::size_t>(s)]; ++i, ++next) {
            assign[static_cast<std::size_t>(next)] = {
                s, static_cast<int>(out[static_cast<std::size_t>(s)].maps.size())};
            out[static_cast<std::size_t>(s)].maps.push_back(manifest.maps[static_cast<std::size_t>(next)]);
        }
    }
    for (const auto& tx : manifest.txs) {
        const auto [s, idx] = assign[static_cast<std::size_t>(tx.map_index)];
        if (s < 0) continue;  // map beyond the requested counts
        DatasetManifest::TxRec rec = tx;
        rec.map_index = idx;
        out[static_cast<std::size_t>(s)].txs.push_back(rec);
    }
    return out;
}

namespace {

// Air->building transitions along the marched integer ray from (r0,c0) to (r1,c1).
int count_wall_crossings(const Tensor& building, int r0, int c0, int r1, int c1) {
    const int W = building.dim(1);
    int dr = std::abs(r1 - r0), dc = std::abs(c1 - c0);
    const int sr = r0 < r1 ? 1 : -1;
    const int sc = c0 < c1 ? 1 : -1;
    int err = dc - dr;
    int r = r0, c = c0;
    int walls = 0;
    bool prev_inside = building[static_cast<std::int64_t>(r) * W + c] > 0.5f;
    while (r != r1 || c != c1) {
        const int e2 = 2 * err;
        if (e2 > -dr) { err -= dr; c += sc; }
        if (e2 < dc) { err += dc; r += sr; }
        const bool inside = building[static_cast<std::int64_t>(r) * W + c] > 0.5f;
        if (inside && !prev_inside) ++walls;
        prev_inside = inside;
    }
    return walls;
}

}  // namespace

Tensor toy_target(const Tensor& building, int tx_row, int tx_col, const ToyParams& params) {
    const int H = building.dim(0), W = building.dim(1);
    if (tx_row < 0 || tx_row >= H || tx_col < 0 || tx_col >= W)
        throw std::invalid_argument("toy_target: transmitter outside the grid");
    Tensor target({H, W});
    for (int r = 0; r < H; ++r) {
        for (int c = 0; c < W; ++c) {
            if (building[static_cast<std::int64_t>(r) * W + c] > 0.5f) continue;  // stays 0
            const double d = std::max(
                1.0, std::sqrt(static_cast<double>(r - tx_row) * (r - tx_row) +
                               static_cast<double>(c - tx_col) * (c - tx_col)));
            const int walls = count_wall_crossings(building, tx_row, tx_col, r, c);
            const double pl = params.pl0_db + 10.0 * params.gamma * std::log10(d) +
                              params.wall_db * walls;
            const double v = 1.0 - pl / params.range_db;
            target[static_cast<std::int64_t>(r) * W + c] =
                static_cast<float>(std::clamp(v, 0.0, 1.0));
        }
    }
    return target;
}

std::vector<Sample> synth_toy_dataset(const ToyParams& params) {
    if (params.size < 32) throw std::invalid_argument("toy dataset: size must be >= 32");
    if (params.n_maps < 1 || params.txs_per_map < 1)
        throw std::invalid_argument("toy dataset: need at least one map and one transmitter");
    std::mt19937_64 rng(params.seed);
    const int S = params.size;
    std::uniform_int_distribution<int> n_rects(S / 16, S / 8);
    std::uniform_int_distribution<int> extent(3, std::max(4, S / 4));
    std::uniform_int_distribution<int> coord(0, S - 1);

    std::vector<Sample> samples;
    samples.reserve(static_cast<std::size_t>(params.n_maps) * params.txs_per_map);
    for (int m = 0; m < params.n_maps; ++m) {
        Tensor building({S, S});
        const int rects = n_rects(rng);
        for (int q = 0; q < rects; ++q) {
            const int h = extent(rng), w = extent(rng);
            const int r0 = std::uniform_int_distribution<int>(0, S - h)(rng);
            const int c0 = std::uniform_int_distribution<int>(0, S - w)(rng);
            for (int r = r0; r < r0 + h; ++r)
                for (int c = c0; c < c0 + w; ++c)
                    building[static_cast<std::int64_t>(r) * S + c] = 1.0f;
        }
        char idbuf[16];
        std::snprintf(idbuf, sizeof(idbuf), "map_%04d", m);
        for (int t = 0; t < params.txs_per_map; ++t) {
            int tr = 0, tc = 0;
            bool placed = false;
            for (int tries = 0; tries < 10000; ++tries) {
                tr = coord(rng);
                tc = coord(rng);
                if (building[static_cast<std::int64_t>(tr) * S + tc] < 0.5f) {
                    placed = true;
                    break;
                }
            }
            if (!placed)
                throw std::runtime_error("toy dataset: degenerate map " + std::string(idbuf) +
                                         " (no free pixel for a transmitter)");
            Sample s;
            s.map_id = idbuf;
            s.building = building;
            s.tx_row = tr;
            s.tx_col = tc;
            s.target = toy_target(building, tr, tc, params);
            samples.push_back(std::move(s));
        }
    }
    return samples;
}

void write_dataset(const std::string& dir, const std::vector<Sample>& samples,
                   const std::string& setting, const Normalizer& normalizer) {
    fs::create_directories(fs::path(dir) / "maps");
    fs::create_directories(fs::path(dir) / "targets");

    DatasetManifest m;
    m.root = dir;
    m.setting = setting;
    m.normalizer = normalizer;

    std::map<std::string, int> map_index;
    std::map<std::string, int> tx_counter;
    for (const Sample& s : samples) {
        auto it = map_index.find(s.map_id);
        if (it == map_index.end()) {
            const std::string rel = "maps/" + s.map_id + ".png";
            write_png_gray((fs::path(dir) / rel).string(), s.building);
            map_index[s.map_id] = static_cast<int>(m.maps.size());
            DatasetManifest::MapRec rec;
            rec.id = s.map_id;
            rec.building_png = rel;
            if (s.cars) {
                rec.car_png = "maps/" + s.map_id + "_cars.png";
                write_png_gray((fs::path(dir) / rec.car_png).string(), *s.cars);
            }
            m.maps.push_back(std::move(rec));
            it = map_index.find(s.map_id);
        }
        const int tx_id = tx_counter[s.map_id]++;
        char buf[16];
        std::snprintf(buf, sizeof(buf), "_tx%02d.png", tx_id);
        DatasetManifest::TxRec rec;
        rec.map_index = it->second;
        rec.row = s.tx_row;
        rec.col = s.tx_col;
        rec.target_png = "targets/" + s.map_id + buf;
        write_png_gray((fs::path(dir) / rec.target_png).string(), s.target);
        m.txs.push_back(std::move(rec));
    }
    m.save((fs::path(dir) / "manifest.txt").string());
}

}  // namespace gequnet
