#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cipherids/schema.hpp"

namespace cipherids {

struct PcapPacket {
    std::uint32_t ts_sec = 0;
    std::uint32_t ts_frac = 0; // microseconds, or nanoseconds when nanos is set
    bool nanos = false;
    std::uint32_t orig_len = 0;
    std::vector<std::uint8_t> data; // captured bytes
};

// Classic pcap reader. Accepts magic 0xA1B2C3D4 / 0xA1B23C4D and their
// byte-swapped variants; pcapng is out of scope. Only LINKTYPE_ETHERNET (1)
// captures are dissected.
class PcapReader {
public:
    explicit PcapReader(const std::string& path);

    std::uint32_t link_type() const { return link_type_; }
    bool nanosecond_timestamps() const { return nanos_; }

    // Reads the next packet; returns false at clean end-of-file. Throws
    // MalformedCapture (with byte offset) on truncated structures.
    bool next(PcapPacket& out);

private:
    std::uint32_t read_u32(const std::uint8_t* p) const;
    std::uint16_t read_u16(const std::uint8_t* p) const;

    std::vector<std::uint8_t> bytes_;
    std::size_t pos_ = 0;
    bool swapped_ = false;
    bool nanos_ = false;
    std::uint32_t link_type_ = 0;
};

// Dissects every packet of the capture into one record over the given schema.
// Fields that do not apply to a packet's protocol stack hold the canonical
// empty marker; labels are the sentinel. Order equals capture order.
std::vector<FeatureRecord> extract_features(const std::string& capture_path,
                                            const FeatureSchema& schema);

} // namespace cipherids
