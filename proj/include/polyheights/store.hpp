#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>

#include "polyheights/json_io.hpp"
#include "polyheights/version.hpp"

namespace polyheights {

// Content-addressed on-disk cache for census runs, keyed by the full input
// tuple plus the code version.  One writer per key: results land under a
// temporary name and are renamed into place.
class CensusStore {
public:
    explicit CensusStore(std::filesystem::path dir) : dir_(std::move(dir)) {}

    static std::string key(int d, const HeightsVector& target, int n, int grid) {
        std::string material = std::to_string(d) + "|" + std::to_string(n) + "|" +
                               std::to_string(grid) + "|" + kVersion;
        char buf[40];
        for (double h : target.heights) {
            std::snprintf(buf, sizeof buf, "|%.17g", h);
            material += buf;
        }
        // FNV-1a, stable across runs and platforms
        std::uint64_t hash = 1469598103934665603ull;
        for (unsigned char ch : material) {
            hash ^= ch;
            hash *= 1099511628211ull;
        }
        std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash));
        return buf;
    }

    std::optional<FiberCensus> load(const std::string& key) const {
        const auto path = dir_ / (key + ".json");
        std::ifstream in(path);
        if (!in) return std::nullopt;
        try {
            Json j;
            in >> j;
            return census_from_json(j);
        } catch (...) {
            return std::nullopt;
        }
    }

    void save(const std::string& key, const FiberCensus& census) const {
        std::filesystem::create_directories(dir_);
        const auto tmp = dir_ / (key + ".tmp");
        const auto path = dir_ / (key + ".json");
        {
            std::ofstream out(tmp);
            out << to_json(census).dump(1);
        }
        std::filesystem::rename(tmp, path);
    }

    const std::filesystem::path& dir() const { return dir_; }

private:
    std::filesystem::path dir_;
};

}  // namespace polyheights
