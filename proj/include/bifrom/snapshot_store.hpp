#pragma once

#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "bifrom/csv.hpp"
#include "bifrom/types.hpp"

namespace bifrom {

namespace fs = std::filesystem;

// Layout: <dir>/snapshots.csv (D rows x S columns, one column per snapshot)
// plus <dir>/meta.json with parameters, branch tags, seed and generator.
// An empty set writes only the metadata file.
inline void save_snapshot_set(const SnapshotSet& set, const fs::path& dir) {
    set.validate();
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory: " + dir.string());

    nlohmann::json meta;
    meta["dimension"] = set.state_dim();
    meta["count"] = set.size();
    meta["seed"] = set.seed;
    meta["generator"] = set.generator;
    auto params = nlohmann::json::array();
    auto branches = nlohmann::json::array();
    for (const auto& e : set.entries) {
        params.push_back(e.parameter.coords);
        branches.push_back(to_string(e.branch));
    }
    meta["parameters"] = std::move(params);
    meta["branches"] = std::move(branches);

    std::ofstream mf(dir / "meta.json");
    if (!mf) throw IoError("cannot write: " + (dir / "meta.json").string());
    mf << meta.dump(2) << '\n';

    if (!set.entries.empty()) {
        Matrix X(set.state_dim(), static_cast<Eigen::Index>(set.size()));
        for (std::size_t j = 0; j < set.size(); ++j)
            X.col(static_cast<Eigen::Index>(j)) = set.entries[j].state;
        csv::write_matrix((dir / "snapshots.csv").string(), X);
    }
}

inline SnapshotSet load_snapshot_set(const fs::path& dir) {
    const fs::path meta_path = dir / "meta.json";
    std::ifstream mf(meta_path);
    if (!mf) throw IoError("missing file: " + meta_path.string());
    nlohmann::json meta;
    try {
        mf >> meta;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(meta_path.string() + ": " + e.what());
    }

    SnapshotSet set;
    try {
        set.seed = meta.at("seed").get<std::uint64_t>();
        set.generator = meta.at("generator").get<std::string>();
        const auto count = meta.at("count").get<std::size_t>();
        const auto dim = meta.at("dimension").get<Eigen::Index>();
        const auto& params = meta.at("parameters");
        const auto& branches = meta.at("branches");
        if (params.size() != count || branches.size() != count)
            throw ParseError(meta_path.string() + ": count disagrees with parameter/branch lists");

        Matrix X(0, 0);
        if (count > 0) {
            X = csv::read_matrix((dir / "snapshots.csv").string());
            if (static_cast<std::size_t>(X.cols()) != count)
                throw ParseError(meta_path.string() + ": metadata lists " + std::to_string(count) +
                                 " entries but snapshots.csv has " + std::to_string(X.cols()) +
                                 " columns");
            if (X.rows() != dim)
                throw DimensionError((dir / "snapshots.csv").string() + ": row count " +
                                     std::to_string(X.rows()) + " does not match dimension " +
                                     std::to_string(dim));
        }
        for (std::size_t j = 0; j < count; ++j) {
            SnapshotSet::Entry e;
            e.parameter = ParameterPoint(params[j].get<std::vector<double>>());
            e.branch = branch_from_string(branches[j].get<std::string>());
            e.state = X.col(static_cast<Eigen::Index>(j));
            set.entries.push_back(std::move(e));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(meta_path.string() + ": " + e.what());
    }
    set.validate();
    return set;
}

}  // namespace bifrom
