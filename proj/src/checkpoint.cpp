#include "fusionhead/checkpoint.hpp"

#include <charconv>
#include <cmath>
#include <limits>
#include <map>

#include "fusionhead/error.hpp"
#include "fusionhead/io.hpp"

namespace fusionhead {

namespace {

constexpr std::string_view kMbfmMagic = "MBFM";

std::map<std::string, std::string> parse_key_values(std::string_view text, const std::string& context) {
    std::map<std::string, std::string> kv;
    std::size_t line_no = 0;
    while (!text.empty()) {
        ++line_no;
        std::size_t end = text.find('\n');
        std::string_view line = text.substr(0, end);
        text.remove_prefix(end == std::string_view::npos ? text.size() : end + 1);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string_view::npos)
            throw FormatError(context + " line " + std::to_string(line_no) + ": expected key=value");
        kv.emplace(std::string(line.substr(0, eq)), std::string(line.substr(eq + 1)));
    }
    return kv;
}

template <typename T>
T parse_number(const std::string& s, const std::string& key, const std::string& context) {
    T v{};
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size())
        throw FormatError(context + ": bad value for " + key + ": \"" + s + "\"");
    return v;
}

}  // namespace

std::string encode_mbfm(const BranchModel& model) {
    if (model.bias.size() != model.num_classes()) throw ShapeError("bias length does not match K");
    if (model.dim() > std::numeric_limits<std::uint32_t>::max() ||
        model.num_classes() > std::numeric_limits<std::uint32_t>::max())
        throw ShapeError("model too large for MBFM");
    std::string out;
    out.reserve(16 + 8 * (model.weights.values().size() + model.bias.size()));
    out.append(kMbfmMagic);
    io::put_u32(out, kMbfmVersion);
    io::put_u32(out, static_cast<std::uint32_t>(model.dim()));
    io::put_u32(out, static_cast<std::uint32_t>(model.num_classes()));
    for (double w : model.weights.values()) io::put_f64(out, w);
    for (double b : model.bias.values()) io::put_f64(out, b);
    return out;
}

BranchModel decode_mbfm(std::string_view bytes, std::string name) {
    if (bytes.size() < kMbfmMagic.size() || bytes.substr(0, kMbfmMagic.size()) != kMbfmMagic)
        throw FormatError(name + ": bad magic, expected \"MBFM\"");
    io::ByteReader in(bytes, name);
    in.take(kMbfmMagic.size());
    const std::uint32_t version = in.u32();
    if (version != kMbfmVersion) throw FormatError(name + ": unsupported MBFM version " + std::to_string(version));
    const std::size_t p = in.u32();
    const std::size_t k = in.u32();
    if (p == 0 || k < 2) throw ValidationError(name + ": invalid model shape p=" + std::to_string(p) + ", K=" + std::to_string(k));
    if (in.remaining() != 8 * (p * k + k))
        throw CorruptionError(name + ": payload holds " + std::to_string(in.remaining()) + " bytes, expected " +
                              std::to_string(8 * (p * k + k)));
    BranchModel model{std::move(name), Matrix(p, k), Vector(k)};
    for (double& w : model.weights.values()) w = in.f64();
    for (double& b : model.bias.values()) b = in.f64();
    if (!all_finite(model.weights.values()) || !all_finite(model.bias.values()))
        throw ValidationError(model.name + ": checkpoint holds non-finite parameters");
    return model;
}

std::string format_sidecar(const Checkpoint& ckpt) {
    const auto& c = ckpt.config;
    std::string out;
    out += "name=" + ckpt.model.name + "\n";
    out += "dim=" + std::to_string(ckpt.model.dim()) + "\n";
    out += "classes=" + std::to_string(ckpt.model.num_classes()) + "\n";
    out += "learning_rate=" + io::format_double(c.learning_rate) + "\n";
    out += "epochs=" + std::to_string(c.epochs) + "\n";
    out += "batch_size=" + std::to_string(c.batch_size) + "\n";
    out += "seed=" + std::to_string(c.seed) + "\n";
    out += "init_scale=" + io::format_double(c.init_scale_for(ckpt.model.dim())) + "\n";
    out += "loss_trace=";
    for (std::size_t i = 0; i < ckpt.loss_trace.size(); ++i) {
        if (i) out += ',';
        out += io::format_double(ckpt.loss_trace[i]);
    }
    out += "\n";
    return out;
}

std::filesystem::path sidecar_path(const std::filesystem::path& checkpoint) {
    std::filesystem::path p = checkpoint;
    p += ".meta";
    return p;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    io::write_file_atomic(path, encode_mbfm(ckpt.model));
    io::write_file_atomic(sidecar_path(path), format_sidecar(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    Checkpoint ckpt;
    ckpt.model = decode_mbfm(io::read_file(path), path.stem().string());
    const auto meta = sidecar_path(path);
    if (!std::filesystem::exists(meta)) return ckpt;

    const std::string context = meta.string();
    const auto kv = parse_key_values(io::read_file(meta), context);
    auto get = [&](const std::string& key) -> const std::string* {
        auto it = kv.find(key);
        return it == kv.end() ? nullptr : &it->second;
    };
    if (auto v = get("name")) ckpt.model.name = *v;
    if (auto v = get("dim"); v && parse_number<std::size_t>(*v, "dim", context) != ckpt.model.dim())
        throw ValidationError(context + ": dim disagrees with checkpoint");
    if (auto v = get("classes"); v && parse_number<std::size_t>(*v, "classes", context) != ckpt.model.num_classes())
        throw ValidationError(context + ": classes disagrees with checkpoint");
    if (auto v = get("learning_rate")) ckpt.config.learning_rate = parse_number<double>(*v, "learning_rate", context);
    if (auto v = get("epochs")) ckpt.config.epochs = parse_number<std::size_t>(*v, "epochs", context);
    if (auto v = get("batch_size")) ckpt.config.batch_size = parse_number<std::size_t>(*v, "batch_size", context);
    if (auto v = get("seed")) ckpt.config.seed = parse_number<std::uint64_t>(*v, "seed", context);
    if (auto v = get("init_scale")) ckpt.config.init_scale = parse_number<double>(*v, "init_scale", context);
    if (auto v = get("loss_trace"); v && !v->empty()) {
        std::string_view s = *v;
        while (true) {
            const std::size_t comma = s.find(',');
            ckpt.loss_trace.push_back(parse_number<double>(std::string(s.substr(0, comma)), "loss_trace", context));
            if (comma == std::string_view::npos) break;
            s.remove_prefix(comma + 1);
        }
    }
    return ckpt;
}

}  // namespace fusionhead
