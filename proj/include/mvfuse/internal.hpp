#ifndef MVFUSE_INTERNAL_HPP
#define MVFUSE_INTERNAL_HPP

#include "mvfuse/integration.hpp"

namespace mvfuse::detail {

void check_aligned(const std::vector<ModalityDataset>& datasets);

int resolve_view_rank(const IntegrationConfig& config, const ModalityDataset& ds, size_t view_idx);

void canonicalize_block(MergedRepresentation& merged, const std::vector<ModalityDataset>& datasets,
                        Eigen::Index begin, Eigen::Index end);

Matrix ajive_project(const AjiveDecomposition& dec, const std::vector<ModalityDataset>& datasets);

/// Shortest-round-trip decimal text for CSV output; deterministic.
std::string fmt_num(double v);

}  // namespace mvfuse::detail

#endif
