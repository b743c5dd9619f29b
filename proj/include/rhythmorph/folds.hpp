#pragma once

#include "rhythmorph/ingest.hpp"

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace rhythmorph {

struct FoldSplit {
    int k = 5;
    std::uint64_t seed = 0;
    std::map<std::string, int> assignment;  // subject_id -> fold

    int fold_of(const std::string& subject_id) const;
    // Fold index of every catalog record, in catalog order.
    std::vector<int> record_folds(const DatasetCatalog& catalog) const;
};

// Sorted subjects are shuffled by `seed` and dealt round-robin to k folds.
// Throws ConfigError when k exceeds the subject count.
FoldSplit subject_kfold(const DatasetCatalog& catalog, int k, std::uint64_t seed);

// Throws LeakageError when a subject's records span folds or a fold is empty.
void check_record_folds(const DatasetCatalog& catalog, const std::vector<int>& record_folds, int k);

// Throws LeakageError unless every id in `fit_ids` is in `train_ids`.
void assert_fit_isolation(const std::vector<std::string>& fit_ids, const std::set<std::string>& train_ids,
                          const std::string& operation);

}  // namespace rhythmorph
