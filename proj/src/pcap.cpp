#include "cipherids/pcap.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <map>
#include <sstream>

#include "cipherids/error.hpp"

namespace cipherids {

namespace {

constexpr std::uint32_t kMagicUsec = 0xA1B2C3D4u;
constexpr std::uint32_t kMagicUsecSwapped = 0xD4C3B2A1u;
constexpr std::uint32_t kMagicNsec = 0xA1B23C4Du;
constexpr std::uint32_t kMagicNsecSwapped = 0x4D3CB2A1u;

constexpr std::uint32_t kLinkTypeEthernet = 1;

std::uint32_t load_u32le(const std::uint8_t* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint32_t load_u32be(const std::uint8_t* p) {
    return (static_cast<std::uint32_t>(p[0]) << 24) | (static_cast<std::uint32_t>(p[1]) << 16) |
           (static_cast<std::uint32_t>(p[2]) << 8) | static_cast<std::uint32_t>(p[3]);
}

std::uint16_t load_u16be(const std::uint8_t* p) {
    return static_cast<std::uint16_t>((p[0] << 8) | p[1]);
}

std::uint16_t load_u16le(const std::uint8_t* p) {
    return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

std::string hex_u32(std::uint32_t v) {
    std::ostringstream os;
    os << "0x" << std::hex << v;
    return os.str();
}

std::string dotted_quad(const std::uint8_t* p) {
    return std::to_string(p[0]) + "." + std::to_string(p[1]) + "." + std::to_string(p[2]) + "." +
           std::to_string(p[3]);
}

std::string hex_bytes(const std::uint8_t* p, std::size_t n) {
    static const char* digits = "0123456789abcdef";
    std::string s;
    s.reserve(n * 2);
    for (std::size_t i = 0; i < n; ++i) {
        s.push_back(digits[p[i] >> 4]);
        s.push_back(digits[p[i] & 0xF]);
    }
    return s;
}

} // namespace

PcapReader::PcapReader(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::io_error, "cannot open capture " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    const std::string& s = buf.str();
    bytes_.assign(s.begin(), s.end());

    if (bytes_.size() < 24)
        throw Error(Errc::malformed_capture,
                    "global header truncated at offset " + std::to_string(bytes_.size()));

    const std::uint32_t magic = load_u32le(bytes_.data());
    switch (magic) {
    case kMagicUsec: swapped_ = false; nanos_ = false; break;
    case kMagicNsec: swapped_ = false; nanos_ = true; break;
    case kMagicUsecSwapped: swapped_ = true; nanos_ = false; break;
    case kMagicNsecSwapped: swapped_ = true; nanos_ = true; break;
    default:
        throw Error(Errc::malformed_capture, "bad magic " + hex_u32(magic) + " at offset 0");
    }
    link_type_ = read_u32(bytes_.data() + 20);
    pos_ = 24;
}

std::uint32_t PcapReader::read_u32(const std::uint8_t* p) const {
    // On-disk order is the writer's native order; the magic told us whether
    // it matches little-endian.
    return swapped_ ? load_u32be(p) : load_u32le(p);
}

std::uint16_t PcapReader::read_u16(const std::uint8_t* p) const {
    return swapped_ ? load_u16be(p) : load_u16le(p);
}

bool PcapReader::next(PcapPacket& out) {
    if (pos_ == bytes_.size()) return false;
    if (pos_ + 16 > bytes_.size())
        throw Error(Errc::malformed_capture,
                    "packet header truncated at offset " + std::to_string(pos_));

    out.ts_sec = read_u32(bytes_.data() + pos_);
    out.ts_frac = read_u32(bytes_.data() + pos_ + 4);
    out.nanos = nanos_;
    const std::uint32_t incl_len = read_u32(bytes_.data() + pos_ + 8);
    out.orig_len = read_u32(bytes_.data() + pos_ + 12);
    pos_ += 16;

    if (pos_ + incl_len > bytes_.size())
        throw Error(Errc::malformed_capture,
                    "packet data truncated at offset " + std::to_string(pos_) + " (need " +
                        std::to_string(incl_len) + " bytes)");
    out.data.assign(bytes_.begin() + static_cast<std::ptrdiff_t>(pos_),
                    bytes_.begin() + static_cast<std::ptrdiff_t>(pos_ + incl_len));
    pos_ += incl_len;
    return true;
}

namespace {

// Per-capture dissection state: UDP conversation indexing for udp.stream and
// udp.time_delta.
struct DissectState {
    struct StreamInfo {
        std::uint32_t index;
        double last_time;
    };
    std::map<std::array<std::uint32_t, 4>, StreamInfo> udp_streams;
    std::uint32_t next_udp_stream = 0;
};

class FieldSink {
public:
    FieldSink(const FeatureSchema& schema, FeatureRecord& record) : schema_(schema), record_(record) {}

    void set(const std::string& name, std::string value) {
        if (auto idx = schema_.index_of(name)) record_.values[*idx] = std::move(value);
    }

    void set_int(const std::string& name, std::int64_t v) { set(name, canonical_integer(v)); }
    void set_flag(const std::string& name, bool v) { set(name, v ? "1" : "0"); }

private:
    const FeatureSchema& schema_;
    FeatureRecord& record_;
};

void dissect_arp(const std::uint8_t* p, std::size_t len, FieldSink& sink) {
    if (len < 8) return;
    const std::uint8_t hlen = p[4];
    const std::uint8_t plen = p[5];
    sink.set_int("arp.hw_size", hlen);
    sink.set_int("arp.opcode", load_u16be(p + 6));
    // sender/target protocol addresses sit after the fixed header + hw addrs
    const std::size_t spa_off = 8 + hlen;
    const std::size_t tpa_off = 8 + hlen + plen + hlen;
    if (plen == 4 && tpa_off + 4 <= len) {
        sink.set("arp.src.proto_ipv4", dotted_quad(p + spa_off));
        sink.set("arp.dst.proto_ipv4", dotted_quad(p + tpa_off));
    }
}

void dissect_icmp(const std::uint8_t* p, std::size_t len, FieldSink& sink) {
    if (len < 4) return;
    const std::uint8_t type = p[0];
    sink.set_int("icmp.checksum", load_u16be(p + 2));
    if ((type == 0 || type == 8) && len >= 8) {
        // echo sequence read with little-endian byte order
        sink.set_int("icmp.seq_le", load_u16le(p + 6));
    }
    if ((type == 3 || type == 4 || type == 11) && len >= 8) {
        sink.set_int("icmp.unused", load_u32be(p + 4));
    }
    if ((type == 13 || type == 14) && len >= 16) {
        sink.set_int("icmp.transmit_timestamp", load_u32be(p + 12));
    }
}

void dissect_tcp(const std::uint8_t* p, std::size_t len, std::size_t ip_payload_len,
                 FieldSink& sink) {
    if (len < 20) return;
    const std::uint16_t sport = load_u16be(p);
    const std::uint16_t dport = load_u16be(p + 2);
    const std::uint32_t seq = load_u32be(p + 4);
    const std::uint32_t ack = load_u32be(p + 8);
    const std::size_t data_off = static_cast<std::size_t>(p[12] >> 4) * 4;
    const std::uint16_t flags = load_u16be(p + 12) & 0x0FFF;

    const bool fin = flags & 0x001;
    const bool syn = flags & 0x002;
    const bool rst = flags & 0x004;
    const bool ack_flag = flags & 0x010;

    sink.set_int("tcp.srcport", sport);
    sink.set_int("tcp.dstport", dport);
    sink.set_int("tcp.seq", seq);
    // no stream tracking offline: relative ack equals the raw ack
    sink.set_int("tcp.ack", ack);
    sink.set_int("tcp.ack_raw", ack);
    sink.set_int("tcp.checksum", load_u16be(p + 16));
    {
        std::ostringstream os;
        os << "0x" << std::hex << flags;
        sink.set("tcp.flags", os.str());
    }
    sink.set_flag("tcp.flags.ack", ack_flag);
    sink.set_flag("tcp.connection.fin", fin);
    sink.set_flag("tcp.connection.rst", rst);
    sink.set_flag("tcp.connection.syn", syn && !ack_flag);
    sink.set_flag("tcp.connection.synack", syn && ack_flag);

    if (data_off >= 20 && data_off <= len) {
        if (data_off > 20) sink.set("tcp.options", hex_bytes(p + 20, data_off - 20));
        const std::size_t payload =
            ip_payload_len >= data_off ? ip_payload_len - data_off : 0;
        sink.set_int("tcp.len", static_cast<std::int64_t>(payload));
        const std::size_t captured_payload = std::min(payload, len - data_off);
        if (captured_payload > 0)
            sink.set("tcp.payload", hex_bytes(p + data_off, captured_payload));
    }
}

void dissect_udp(const std::uint8_t* p, std::size_t len, const std::uint8_t* src_ip,
                 const std::uint8_t* dst_ip, double ts, DissectState& state, FieldSink& sink) {
    if (len < 8) return;
    const std::uint16_t sport = load_u16be(p);
    const std::uint16_t dport = load_u16be(p + 2);
    sink.set_int("udp.port", dport);

    // Bidirectional conversation key, direction-insensitive.
    std::array<std::uint32_t, 4> a{load_u32be(src_ip), static_cast<std::uint32_t>(sport),
                                   load_u32be(dst_ip), static_cast<std::uint32_t>(dport)};
    std::array<std::uint32_t, 4> b{a[2], a[3], a[0], a[1]};
    const auto key = std::min(a, b);
    auto it = state.udp_streams.find(key);
    if (it == state.udp_streams.end()) {
        it = state.udp_streams.emplace(key, DissectState::StreamInfo{state.next_udp_stream++, ts})
                 .first;
        sink.set("udp.time_delta", canonical_real(0.0));
    } else {
        sink.set("udp.time_delta", canonical_real(ts - it->second.last_time));
        it->second.last_time = ts;
    }
    sink.set_int("udp.stream", it->second.index);
}

void dissect_ipv4(const std::uint8_t* p, std::size_t len, double ts, DissectState& state,
                  FieldSink& sink) {
    if (len < 20) return;
    const std::size_t ihl = static_cast<std::size_t>(p[0] & 0x0F) * 4;
    if ((p[0] >> 4) != 4 || ihl < 20 || ihl > len) return;
    const std::uint16_t tot_len = load_u16be(p + 2);
    const std::uint8_t proto = p[9];
    sink.set("ip.src_host", dotted_quad(p + 12));
    sink.set("ip.dst_host", dotted_quad(p + 16));

    const std::size_t captured_payload = len - ihl;
    const std::size_t ip_payload_len = tot_len >= ihl ? tot_len - ihl : captured_payload;
    const std::uint8_t* payload = p + ihl;
    switch (proto) {
    case 1: dissect_icmp(payload, captured_payload, sink); break;
    case 6: dissect_tcp(payload, captured_payload, ip_payload_len, sink); break;
    case 17: dissect_udp(payload, captured_payload, p + 12, p + 16, ts, state, sink); break;
    default: break;
    }
}

std::string frame_time_string(const PcapPacket& pkt) {
    // seconds.fraction with fixed fractional width (6 or 9 digits)
    const int width = pkt.nanos ? 9 : 6;
    std::string frac = std::to_string(pkt.ts_frac);
    if (frac.size() < static_cast<std::size_t>(width))
        frac.insert(frac.begin(), static_cast<std::size_t>(width) - frac.size(), '0');
    return std::to_string(pkt.ts_sec) + "." + frac;
}

} // namespace

std::vector<FeatureRecord> extract_features(const std::string& capture_path,
                                            const FeatureSchema& schema) {
    PcapReader reader(capture_path);
    if (reader.link_type() != kLinkTypeEthernet)
        throw Error(Errc::unsupported_link_type,
                    "link type " + std::to_string(reader.link_type()) +
                        " (only LINKTYPE_ETHERNET=1 is supported)");

    std::vector<FeatureRecord> records;
    DissectState state;
    PcapPacket pkt;
    while (reader.next(pkt)) {
        FeatureRecord record;
        record.values.assign(schema.columns.size(), kEmptyMarker);
        record.label = AttackLabel{}; // sentinel; captures carry no labels
        FieldSink sink(schema, record);

        sink.set("frame.time", frame_time_string(pkt));
        const double ts = static_cast<double>(pkt.ts_sec) +
                          static_cast<double>(pkt.ts_frac) * (pkt.nanos ? 1e-9 : 1e-6);

        const std::uint8_t* p = pkt.data.data();
        std::size_t len = pkt.data.size();
        if (len >= 14) {
            std::uint16_t ether_type = load_u16be(p + 12);
            std::size_t off = 14;
            if (ether_type == 0x8100 && len >= 18) { // single VLAN tag
                ether_type = load_u16be(p + 16);
                off = 18;
            }
            if (ether_type == 0x0806) {
                dissect_arp(p + off, len - off, sink);
            } else if (ether_type == 0x0800) {
                dissect_ipv4(p + off, len - off, ts, state, sink);
            }
        }
        records.push_back(std::move(record));
    }
    return records;
}

} // namespace cipherids
