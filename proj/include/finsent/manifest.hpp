#pragma once

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>
#include <openssl/evp.h>

#include "finsent/errors.hpp"
#include "finsent/version.hpp"

namespace finsent {

inline std::string sha256_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path + " for checksumming");
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    if (ctx == nullptr) throw std::runtime_error("EVP_MD_CTX_new failed");
    if (EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1) {
        EVP_MD_CTX_free(ctx);
        throw std::runtime_error("EVP_DigestInit_ex failed");
    }
    char buffer[1 << 16];
    while (in) {
        in.read(buffer, sizeof buffer);
        const std::streamsize got = in.gcount();
        if (got > 0 && EVP_DigestUpdate(ctx, buffer, static_cast<std::size_t>(got)) != 1) {
            EVP_MD_CTX_free(ctx);
            throw std::runtime_error("EVP_DigestUpdate failed");
        }
    }
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int length = 0;
    if (EVP_DigestFinal_ex(ctx, digest, &length) != 1) {
        EVP_MD_CTX_free(ctx);
        throw std::runtime_error("EVP_DigestFinal_ex failed");
    }
    EVP_MD_CTX_free(ctx);
    static const char* hex = "0123456789abcdef";
    std::string out;
    out.reserve(2 * length);
    for (unsigned int i = 0; i < length; ++i) {
        out.push_back(hex[digest[i] >> 4]);
        out.push_back(hex[digest[i] & 0x0F]);
    }
    return out;
}

inline std::string utc_timestamp() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buffer[80];
    std::snprintf(buffer, sizeof buffer, "%04d-%02d-%02dT%02d:%02d:%02dZ", tm.tm_year + 1900,
                  tm.tm_mon + 1, tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec);
    return buffer;
}

/// Reproducibility record for one run: the resolved config, SHA-256 of every
/// input, the tool version, and dropped-item logs.
struct RunManifest {
    std::string command;
    nlohmann::json config;
    std::vector<std::pair<std::string, std::string>> input_checksums; // (path, sha256)
    std::vector<std::string> outputs;
    nlohmann::json dropped = nlohmann::json::array();
    nlohmann::json extra = nlohmann::json::object();

    void add_input(const std::string& path) {
        input_checksums.emplace_back(path, sha256_file(path));
    }
    void add_output(const std::string& path) { outputs.push_back(path); }

    nlohmann::json to_json() const {
        nlohmann::json obj;
        obj["tool"] = kToolName;
        obj["version"] = kVersion;
        obj["command"] = command;
        obj["created_utc"] = utc_timestamp();
        obj["config"] = config;
        nlohmann::json inputs = nlohmann::json::object();
        for (const auto& [path, digest] : input_checksums) inputs[path] = digest;
        obj["inputs"] = std::move(inputs);
        obj["outputs"] = outputs;
        obj["dropped"] = dropped;
        if (!extra.empty()) obj["run"] = extra;
        return obj;
    }
};

/// Atomic write: the manifest lands under its final name only when complete.
inline void write_manifest(const RunManifest& manifest, const std::string& path) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError("cannot open " + tmp + " for writing");
        out << manifest.to_json().dump(2) << '\n';
        out.flush();
        if (!out) throw DataError("failed writing manifest to " + tmp);
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        throw DataError("failed to move manifest into place: " + ec.message());
    }
}

} // namespace finsent
