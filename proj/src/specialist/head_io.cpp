#include <nlohmann/json.hpp>

#include "clarify/detail/bytes.hpp"
#include "clarify/specialist/io.hpp"

namespace clarify::specialist {

namespace {
constexpr std::string_view kMagic = "CLFY";
}

std::vector<std::uint8_t> encode_head(const ClassifierHead& head) {
    const nlohmann::json header{{"input_dim", head.input_dim()},
                                {"hidden_dim", head.hidden_dim()},
                                {"num_classes", head.num_classes()},
                                {"activation", std::string(to_string(head.activation()))},
                                {"class_names", head.class_names()}};
    const std::string header_text = header.dump();

    detail::ByteWriter w;
    w.raw(kMagic);
    w.u32(kHeadFormatVersion);
    w.str(header_text);
    const auto& p = head.params();
    for (double v : p.w1.data) w.f64(v);
    for (double v : p.b1) w.f64(v);
    for (double v : p.w2.data) w.f64(v);
    for (double v : p.b2) w.f64(v);
    return w.take();
}

ClassifierHead decode_head(const std::vector<std::uint8_t>& bytes) {
    detail::ByteReader r(bytes);
    if (r.raw(4, "magic") != kMagic) throw FormatError(0, "not a head file (bad magic)");
    const std::size_t version_at = r.offset();
    const std::uint32_t version = r.u32("version");
    if (version != kHeadFormatVersion)
        throw FormatError(version_at, "unsupported_version " + std::to_string(version));

    const std::size_t header_at = r.offset();
    const std::string header_text = r.str("header");
    std::size_t d = 0, h = 0, k = 0;
    Activation act{};
    std::vector<std::string> names;
    try {
        const auto header = nlohmann::json::parse(header_text);
        d = header.at("input_dim").get<std::size_t>();
        h = header.at("hidden_dim").get<std::size_t>();
        k = header.at("num_classes").get<std::size_t>();
        act = activation_from_string(header.at("activation").get<std::string>());
        names = header.at("class_names").get<std::vector<std::string>>();
    } catch (const std::exception& e) {
        throw FormatError(header_at, std::string("bad header: ") + e.what());
    }
    // Bound the allocation by what the file can actually hold.
    const std::size_t count = h * d + h + k * h + k;
    if (d == 0 || h == 0 || k == 0 || count > r.remaining() / 8)
        throw FormatError(r.offset(), "weight block truncated or header dims invalid");

    HeadParameters p;
    p.w1 = Matrix(h, d);
    p.b1.resize(h);
    p.w2 = Matrix(k, h);
    p.b2.resize(k);
    for (auto& v : p.w1.data) v = r.f64("w1");
    for (auto& v : p.b1) v = r.f64("b1");
    for (auto& v : p.w2.data) v = r.f64("w2");
    for (auto& v : p.b2) v = r.f64("b2");
    r.expect_end();

    const std::size_t end = r.offset();
    try {
        return ClassifierHead(std::move(p), act, std::move(names));
    } catch (const Error& e) {
        throw FormatError(end, std::string("inconsistent head: ") + e.what());
    }
}

void save_head(const ClassifierHead& head, const std::string& path) {
    detail::write_file_bytes(path, encode_head(head));
}

ClassifierHead load_head(const std::string& path) { return decode_head(detail::read_file_bytes(path)); }

}  // namespace clarify::specialist
