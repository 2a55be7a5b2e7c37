#include "gequnet/model.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace gequnet {

std::string WidthScale::str() const {
    if (den == 1) return std::to_string(num);
    return std::to_string(num) + "/" + std::to_string(den);
}

WidthScale WidthScale::parse(std::string_view s) {
    WidthScale w;
    const auto slash = s.find('/');
    try {
        if (slash == std::string_view::npos) {
            w.num = std::stoi(std::string(s));
            w.den = 1;
        } else {
            w.num = std::stoi(std::string(s.substr(0, slash)));
            w.den = std::stoi(std::string(s.substr(slash + 1)));
        }
    } catch (const std::exception&) {
        throw std::invalid_argument("width scale: expected N or N/D, got '" + std::string(s) + "'");
    }
    if (w.num < 1 || w.den < 1)
        throw std::invalid_argument("width scale: must be a positive rational, got '" +
                                    std::string(s) + "'");
    return w;
}

std::int64_t count_params(const ModelConfig& config) {
    const int G = config.spec.order();
    const int k = 3;
    const int e0 = config.scaled(config.encoder_fields[0]);
    std::int64_t n = static_cast<std::int64_t>(e0) * config.input_channels() * k * k + e0;
    for (const auto& p : detail::gconv_plans(config))
        n += static_cast<std::int64_t>(p.out_fields) * p.in_fields * G * k * k + p.out_fields;
    return n;
}

namespace {

std::string join_widths(const int* w, int count) {
    std::string s;
    for (int i = 0; i < count; ++i) {
        if (i) s += ',';
        s += std::to_string(w[i]);
    }
    return s;
}

std::vector<int> parse_widths(const std::string& s) {
    std::vector<int> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(std::stoi(item));
    return out;
}

constexpr const char* kCheckpointMagic = "GEQUNET-CKPT 1";

}  // namespace

void save_checkpoint(const std::string& path, const Model& model) {
    std::ostringstream body(std::ios::binary);
    const ModelConfig& c = model.config();
    body << kCheckpointMagic << "\n";
    body << "group=" << c.spec.name() << "\n";
    body << "with_cars=" << (c.with_cars ? 1 : 0) << "\n";
    body << "encoder=" << join_widths(c.encoder_fields.data(), 5) << "\n";
    body << "bottleneck=" << c.bottleneck_fields << "\n";
    body << "decoder=" << join_widths(c.decoder_fields.data(), 4) << "\n";
    body << "width_scale=" << c.width_scale.str() << "\n";
    body << "seed=" << c.seed << "\n";
    body << "END\n";
    save_layer(body, model.lift());
    for (int i = 0; i < Model::kNumGConvs; ++i) save_layer(body, model.gconv(i));

    const std::string bytes = body.str();
    const auto crc = static_cast<std::uint32_t>(
        crc32(0, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size())));

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("checkpoint: cannot open '" + path + "' for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    wire::write_u32(out, crc);
    if (!out) throw std::runtime_error("checkpoint: write failed for '" + path + "'");
}

Model load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("checkpoint: cannot open '" + path + "'");
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (bytes.size() < 4) throw std::runtime_error("checkpoint: '" + path + "' is truncated");

    const std::size_t payload = bytes.size() - 4;
    std::uint32_t stored = 0;
    for (int b = 0; b < 4; ++b)
        stored |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[payload + b])) << (8 * b);
    const auto computed = static_cast<std::uint32_t>(
        crc32(0, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(payload)));
    if (stored != computed)
        throw std::runtime_error("checkpoint: CRC mismatch in '" + path + "' (corrupt file)");

    std::istringstream is(bytes.substr(0, payload), std::ios::binary);
    std::string line;
    if (!std::getline(is, line) || line != kCheckpointMagic)
        throw std::runtime_error("checkpoint: '" + path + "' is not a GEQUNET checkpoint");

    ModelConfig config;
    while (std::getline(is, line) && line != "END") {
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error("checkpoint: malformed header line '" + line + "'");
        const std::string key = line.substr(0, eq);
        const std::string value = line.substr(eq + 1);
        if (key == "group") {
            config.spec = GroupSpec::parse(value);
        } else if (key == "with_cars") {
            config.with_cars = value == "1";
        } else if (key == "encoder") {
            const auto w = parse_widths(value);
            if (w.size() != 5) throw std::runtime_error("checkpoint: encoder widths must have 5 entries");
            std::copy(w.begin(), w.end(), config.encoder_fields.begin());
        } else if (key == "bottleneck") {
            config.bottleneck_fields = std::stoi(value);
        } else if (key == "decoder") {
            const auto w = parse_widths(value);
            if (w.size() != 4) throw std::runtime_error("checkpoint: decoder widths must have 4 entries");
            std::copy(w.begin(), w.end(), config.decoder_fields.begin());
        } else if (key == "width_scale") {
            config.width_scale = WidthScale::parse(value);
        } else if (key == "seed") {
            config.seed = std::stoull(value);
        } else {
            throw std::runtime_error("checkpoint: unknown header key '" + key + "'");
        }
    }
    if (line != "END") throw std::runtime_error("checkpoint: header not terminated in '" + path + "'");

    Model model(config);
    load_layer(is, model.lift());
    for (int i = 0; i < Model::kNumGConvs; ++i) load_layer(is, model.gconv(i));
    return model;
}

}  // namespace gequnet
