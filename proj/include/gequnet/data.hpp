#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gequnet/tensor.hpp"

namespace gequnet {

// Linear map between pathloss in dB and the normalized [0,1] gray scale:
// 1.0 is the strongest signal (min_pathloss_db), 0.0 is min + dynamic_range.
struct Normalizer {
    double dynamic_range_db = 80.0;
    double min_pathloss_db = 0.0;

    double normalize(double pl_db) const {
        return 1.0 - (pl_db - min_pathloss_db) / dynamic_range_db;
    }
    double denormalize(double v) const { return min_pathloss_db + (1.0 - v) * dynamic_range_db; }
};

struct Sample {
    std::string map_id;
    Tensor building;            // [H,W], 1 = building
    std::optional<Tensor> cars; // [H,W], 1 = car
    int tx_row = 0;
    int tx_col = 0;
    Tensor target;              // [H,W], normalized pathloss in [0,1]
};

// Text manifest describing a dataset on disk. All file paths are relative to
// the manifest's directory. Grammar (one record per line, '#' comments):
//   version 1
//   setting <DPM_noCars|IRT_noCars|DPM_cars>
//   dynamic_range_db <float>
//   min_pathloss_db <float>
//   map <map_id> <building_png>
//   cars <map_id> <car_png>
//   tx <map_id> <row> <col> <target_png>
struct DatasetManifest {
    struct MapRec {
        std::string id;
        std::string building_png;
        std::string car_png;  // empty when absent
    };
    struct TxRec {
        int map_index = 0;
        int row = 0;
        int col = 0;
        std::string target_png;
    };

    std::string root;  // directory containing the manifest
    std::string setting = "DPM_noCars";
    Normalizer normalizer;
    std::vector<MapRec> maps;
    std::vector<TxRec> txs;

    std::size_t size() const { return txs.size(); }

    static DatasetManifest load(const std::string& path);
    void save(const std::string& path) const;
};

// Loads one sample (images read from disk, sizes validated).
Sample load_sample(const DatasetManifest& manifest, std::size_t index);

// Loads every sample in manifest order. Deterministic.
std::vector<Sample> load_dataset(const DatasetManifest& manifest);

// Partitions maps (in declared order) into train/val/test manifests. Every
// transmitter of a map stays with its map. Throws when maps are insufficient.
std::array<DatasetManifest, 3> split_by_map(const DatasetManifest& manifest,
                                            std::array<int, 3> counts = {500, 100, 100});

// Model input encoding: channel 0 = building mask, channel 1 = transmitter
// one-hot, channel 2 (with_cars) = car mask.
template <typename T>
TensorT<T> encode_input(const Sample& sample, bool with_cars) {
    const int H = sample.building.dim(0), W = sample.building.dim(1);
    if (with_cars && !sample.cars)
        throw std::invalid_argument("encode_input: sample '" + sample.map_id +
                                    "' has no car grid but with_cars is set");
    if (sample.tx_row < 0 || sample.tx_row >= H || sample.tx_col < 0 || sample.tx_col >= W)
        throw std::invalid_argument("encode_input: transmitter outside the grid");
    TensorT<T> x({with_cars ? 3 : 2, H, W});
    for (std::int64_t i = 0; i < sample.building.size(); ++i)
        x[i] = static_cast<T>(sample.building[i]);
    x[static_cast<std::int64_t>(H) * W + sample.tx_row * W + sample.tx_col] = T(1);
    if (with_cars)
        for (std::int64_t i = 0; i < sample.cars->size(); ++i)
            x[2 * static_cast<std::int64_t>(H) * W + i] = static_cast<T>((*sample.cars)[i]);
    return x;
}

// Synthetic stand-in for a pathloss simulator: log-distance decay plus a
// fixed per-wall penalty, over layouts of random axis-aligned rectangles.
struct ToyParams {
    int n_maps = 200;
    int size = 64;
    int txs_per_map = 1;
    std::uint64_t seed = 0;
    double pl0_db = 20.0;    // loss at 1 m
    double gamma = 2.5;      // log-distance exponent
    double wall_db = 10.0;   // penalty per wall crossed
    double range_db = 80.0;  // normalization range
};

// target(p) = clamp01(1 - [pl0 + 10*gamma*log10(max(d,1)) + wall_db*walls]/range),
// 0 inside buildings. Walls are air->building transitions along the marched
// ray from the transmitter to p.
Tensor toy_target(const Tensor& building, int tx_row, int tx_col, const ToyParams& params);

// Deterministic dataset generation (unquantized targets).
std::vector<Sample> synth_toy_dataset(const ToyParams& params);

// Writes samples as PNGs plus a manifest ("manifest.txt") under dir, using
// the same layout the loader reads. Targets are quantized to 8 bits.
void write_dataset(const std::string& dir, const std::vector<Sample>& samples,
                   const std::string& setting, const Normalizer& normalizer);

}  // namespace gequnet
