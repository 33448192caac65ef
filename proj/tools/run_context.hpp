// Copyright 2026 The ihcq Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef IHCQ_TOOLS_RUN_CONTEXT_HPP
#define IHCQ_TOOLS_RUN_CONTEXT_HPP

#include <openssl/evp.h>

#include <array>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ihcq/config.hpp"
#include "ihcq/util.hpp"

namespace ihcq::cli {

inline std::string sha256_hex(std::string_view bytes) {
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
    std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
    unsigned int len = 0;
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
        EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 ||
        EVP_DigestFinal_ex(ctx.get(), md.data(), &len) != 1) {
        throw Error(ErrorKind::Io, "SHA-256 computation failed");
    }
    static const char* hex = "0123456789abcdef";
    std::string out;
    out.reserve(2 * len);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[md[i] >> 4]);
        out.push_back(hex[md[i] & 0xf]);
    }
    return out;
}

inline std::string sha256_file(const std::filesystem::path& path) { return sha256_hex(read_file(path)); }

/// UTC timestamp from SOURCE_DATE_EPOCH when set, otherwise the current time.
inline std::string current_timestamp() {
    std::time_t t = std::time(nullptr);
    if (const char* env = std::getenv("SOURCE_DATE_EPOCH"); env && *env) {
        t = static_cast<std::time_t>(csv::parse_int(env, "SOURCE_DATE_EPOCH"));
    }
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

/**
 * State shared by one command invocation: effective config, output directory, recorded
 * inputs and the provenance needed to replay it.
 */
struct RunContext {
    std::string command;
    std::vector<std::string> argv;
    std::string cwd;
    std::string created_at;
    RunConfig config;
    std::filesystem::path out_dir;
    nlohmann::ordered_json inputs = nlohmann::ordered_json::array();

    int workers() const { return config.workers; }

    void add_input(const std::filesystem::path& path) {
        inputs.push_back({{"path", path.string()}, {"sha256", sha256_file(path)}});
    }

    std::filesystem::path out(const std::string& name) const { return out_dir / name; }

    nlohmann::ordered_json manifest() const {
        nlohmann::ordered_json m;
        m["tool"] = "ihcq";
        m["version"] = IHCQ_VERSION;
        m["command"] = command;
        m["argv"] = argv;
        m["cwd"] = cwd;
        m["created_at"] = created_at;
        m["config"] = to_json(config);
        m["inputs"] = inputs;
        return m;
    }

    void write_text(const std::string& name, std::string_view contents) const {
        write_file_atomic(out(name), contents);
    }

    void write_report(const nlohmann::ordered_json& result) const {
        nlohmann::ordered_json r;
        r["command"] = command;
        r["run_manifest"] = manifest();
        r["result"] = result;
        write_text("report.json", r.dump(2) + "\n");
    }
};

inline int exit_code(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::InvalidArgument: return 2;
        case ErrorKind::Io: return 3;
        case ErrorKind::Format: return 4;
        case ErrorKind::Degenerate: return 5;
        case ErrorKind::Infeasible: return 6;
    }
    return 1;
}

inline void print_error(std::string_view kind, const std::string& message, const std::vector<std::string>& details) {
    nlohmann::ordered_json e;
    e["kind"] = kind;
    e["message"] = message;
    e["details"] = details;
    nlohmann::ordered_json j;
    j["error"] = e;
    std::fprintf(stderr, "%s\n", j.dump().c_str());
}

} // namespace ihcq::cli

#endif
