#include "rhythmorph/folds.hpp"

#include "rhythmorph/errors.hpp"

#include <algorithm>
#include <random>

namespace rhythmorph {

int FoldSplit::fold_of(const std::string& subject_id) const {
    const auto it = assignment.find(subject_id);
    if (it == assignment.end()) throw DataError(DataErrc::precondition, "subject not in split: " + subject_id);
    return it->second;
}

std::vector<int> FoldSplit::record_folds(const DatasetCatalog& catalog) const {
    std::vector<int> out;
    out.reserve(catalog.size());
    for (const auto& r : catalog.records) out.push_back(fold_of(r.subject_id));
    return out;
}

FoldSplit subject_kfold(const DatasetCatalog& catalog, int k, std::uint64_t seed) {
    std::set<std::string> unique;
    for (const auto& r : catalog.records) unique.insert(r.subject_id);
    if (k < 2) throw ConfigError("subject_kfold: k must be >= 2");
    if (static_cast<std::size_t>(k) > unique.size()) {
        throw ConfigError("subject_kfold: k=" + std::to_string(k) + " exceeds " + std::to_string(unique.size()) +
                          " subjects");
    }
    std::vector<std::string> subjects(unique.begin(), unique.end());
    std::mt19937_64 rng(seed);
    std::shuffle(subjects.begin(), subjects.end(), rng);
    FoldSplit split;
    split.k = k;
    split.seed = seed;
    for (std::size_t i = 0; i < subjects.size(); ++i) split.assignment[subjects[i]] = static_cast<int>(i % k);
    return split;
}

void check_record_folds(const DatasetCatalog& catalog, const std::vector<int>& record_folds, int k) {
    if (record_folds.size() != catalog.size()) throw DataError(DataErrc::shape_mismatch, "fold vector size mismatch");
    std::map<std::string, int> seen;
    std::vector<int> counts(static_cast<std::size_t>(k), 0);
    for (std::size_t i = 0; i < record_folds.size(); ++i) {
        const int f = record_folds[i];
        if (f < 0 || f >= k) throw LeakageError("record " + catalog.records[i].record_id + " has no valid fold");
        const auto [it, fresh] = seen.emplace(catalog.records[i].subject_id, f);
        if (!fresh && it->second != f) {
            throw LeakageError("subject " + it->first + " spans folds " + std::to_string(it->second) + " and " +
                               std::to_string(f));
        }
        ++counts[static_cast<std::size_t>(f)];
    }
    for (int f = 0; f < k; ++f)
        if (counts[static_cast<std::size_t>(f)] == 0) throw LeakageError("fold " + std::to_string(f) + " is empty");
}

void assert_fit_isolation(const std::vector<std::string>& fit_ids, const std::set<std::string>& train_ids,
                          const std::string& operation) {
    for (const auto& id : fit_ids) {
        if (!train_ids.count(id)) throw LeakageError(operation + " consumed non-training record " + id);
    }
}

}  // namespace rhythmorph
