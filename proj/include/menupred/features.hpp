#pragma once

#include <set>
#include <string>
#include <vector>

#include "menupred/embedding.hpp"
#include "menupred/errors.hpp"
#include "menupred/linalg.hpp"
#include "menupred/pca.hpp"

namespace menupred {

enum class MenuOrganization { unordered, alphabetical, semantic };

inline char org_letter(MenuOrganization org) {
    switch (org) {
        case MenuOrganization::unordered: return 'U';
        case MenuOrganization::alphabetical: return 'A';
        case MenuOrganization::semantic: return 'S';
    }
    throw DomainError("org_letter: unknown organization");
}

inline const char* org_name(MenuOrganization org) {
    switch (org) {
        case MenuOrganization::unordered: return "unordered";
        case MenuOrganization::alphabetical: return "alphabetical";
        case MenuOrganization::semantic: return "semantic";
    }
    throw DomainError("org_name: unknown organization");
}

inline MenuOrganization parse_organization(std::string_view s) {
    if (s == "U" || s == "u" || s == "unordered") return MenuOrganization::unordered;
    if (s == "A" || s == "a" || s == "alphabetical") return MenuOrganization::alphabetical;
    if (s == "S" || s == "s" || s == "semantic") return MenuOrganization::semantic;
    throw ParseError("unknown menu organization '" + std::string(s) + "'");
}

inline constexpr int kItemFeatureDim = 6;   // target flag + name length + 4 semantic
inline constexpr int kOrgDim = 3;
inline constexpr int kNameProjectionDim = 4;
inline constexpr double kNameLengthScale = 0.1;

/// Fixed convention [unordered, alphabetical, semantic].
inline Vec org_one_hot(MenuOrganization org) {
    Vec v = Vec::Zero(kOrgDim);
    v[static_cast<int>(org)] = 1.0;
    return v;
}

/// PCA (k=4) over the distinct embedded names. Duplicates in `names` are
/// ignored, so the projection is not trial-weighted.
inline PcaProjection fit_name_projection(const std::vector<std::string>& names,
                                         const EmbeddingTable& table) {
    std::set<std::string> distinct;
    std::vector<std::string> ordered;
    for (const std::string& name : names) {
        std::string key = normalize_token(name);
        if (distinct.insert(key).second) ordered.push_back(name);
    }
    if (ordered.size() < 2) {
        throw InsufficientDataError("fit_name_projection: need at least 2 distinct names");
    }
    Mat samples(static_cast<Eigen::Index>(ordered.size()), kEmbeddingDim);
    for (std::size_t i = 0; i < ordered.size(); ++i) {
        samples.row(static_cast<Eigen::Index>(i)) = embed_name(ordered[i], table).transpose();
    }
    return pca_fit(samples, kNameProjectionDim);
}

/// The per-item vector: [target flag, scaled name length, 4-dim name
/// projection]. The 0.1 length scale keeps the feature commensurate with
/// the projected embedding coordinates.
inline Vec item_features(std::string_view name, bool is_target, const EmbeddingTable& table,
                         const PcaProjection& proj) {
    if (proj.k != kNameProjectionDim) {
        throw ShapeError("item_features: projection k must be " +
                         std::to_string(kNameProjectionDim));
    }
    Vec out(kItemFeatureDim);
    out[0] = is_target ? 1.0 : 0.0;
    out[1] = static_cast<double>(name.size()) * kNameLengthScale;
    out.segment(2, kNameProjectionDim) = pca_transform(proj, embed_name(name, table));
    return out;
}

/// Feature rows for a whole menu with the target at `target_index`.
/// Exactly one row carries the target flag.
inline Mat menu_features(const std::vector<std::string>& items, int target_index,
                         const EmbeddingTable& table, const PcaProjection& proj) {
    if (target_index < 0 || static_cast<std::size_t>(target_index) >= items.size()) {
        throw ValidationError("menu_features: target index " + std::to_string(target_index) +
                              " out of range for " + std::to_string(items.size()) + " items");
    }
    Mat feats(static_cast<Eigen::Index>(items.size()), kItemFeatureDim);
    for (std::size_t j = 0; j < items.size(); ++j) {
        feats.row(static_cast<Eigen::Index>(j)) =
            item_features(items[j], static_cast<int>(j) == target_index, table, proj).transpose();
    }
    return feats;
}

}  // namespace menupred
