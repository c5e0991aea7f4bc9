#pragma once

#include <chrono>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "csv.hpp"

namespace smalljump::io {

inline constexpr const char* toolkit_version = "0.3.0";

struct ManifestEntry {
    std::string file;
    std::string checksum;
    std::size_t bytes = 0;
};

// Collects the artifacts of one run and writes them atomically into the output directory.
class RunManifest {
public:
    RunManifest(std::filesystem::path dir, nlohmann::json config)
        : dir_(std::move(dir)), config_(std::move(config)), start_(std::chrono::steady_clock::now()) {}

    const ManifestEntry& write(const std::string& name, const std::string& content) {
        write_atomic(dir_ / name, content);
        entries_.push_back({name, hex64(fnv1a64(content)), content.size()});
        return entries_.back();
    }

    const ManifestEntry& write(const std::string& name, const CsvTable& table) { return write(name, table.str()); }

    void timing(const std::string& label, double seconds) { timings_[label] = seconds; }

    [[nodiscard]] const std::vector<ManifestEntry>& entries() const noexcept { return entries_; }
    [[nodiscard]] const std::filesystem::path& dir() const noexcept { return dir_; }

    void finish() {
        const std::string cfg = config_.dump(2) + "\n";
        write("config.json", cfg);
        nlohmann::json m;
        m["toolkit_version"] = toolkit_version;
        m["config_hash"] = hex64(fnv1a64(config_.dump()));
        m["outputs"] = nlohmann::json::array();
        for (const auto& e : entries_)
            m["outputs"].push_back({{"file", e.file}, {"fnv1a64", e.checksum}, {"bytes", e.bytes}});
        timings_["since_manifest_open"] =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
        m["timings_seconds"] = timings_;
        write_atomic(dir_ / "manifest.json", m.dump(2) + "\n");
    }

private:
    std::filesystem::path dir_;
    nlohmann::json config_;
    std::chrono::steady_clock::time_point start_;
    std::vector<ManifestEntry> entries_;
    nlohmann::json timings_ = nlohmann::json::object();
};

}  // namespace smalljump::io
