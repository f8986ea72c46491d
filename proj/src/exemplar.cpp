#include "arper/exemplar.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "arper/errors.hpp"
#include "arper/rng.hpp"

namespace arper {

double priority_score(double loss, std::size_t slot_count, double beta) {
    if (slot_count == 0) return beta == 0.0 ? loss : 0.0;
    return loss * std::pow(static_cast<double>(slot_count), beta);
}

std::vector<ScoredUtterance> score_utterances(
    std::span<const Utterance> pool,
    const std::function<double(const Utterance&)>& loss_fn, double beta) {
    std::vector<ScoredUtterance> scored;
    scored.reserve(pool.size());
    for (const Utterance& utt : pool)
        scored.push_back({utt, priority_score(loss_fn(utt), utt.da.slot_count(), beta)});
    return scored;
}

PriorityList select_exemplars_prioritized(std::vector<ScoredUtterance> pool, std::size_t m) {
    std::stable_sort(pool.begin(), pool.end(),
                     [](const ScoredUtterance& a, const ScoredUtterance& b) {
                         return a.u_score < b.u_score;
                     });
    PriorityList out;
    std::vector<char> taken(pool.size(), 0);
    std::size_t remaining = pool.size();
    while (out.size() < m && remaining > 0) {
        std::set<std::set<std::string>> seen_slot_sets;
        for (std::size_t i = 0; i < pool.size() && out.size() < m; ++i) {
            if (taken[i]) continue;
            auto slots = pool[i].utt.da.slot_set();
            if (seen_slot_sets.count(slots)) continue;
            taken[i] = 1;
            --remaining;
            seen_slot_sets.insert(std::move(slots));
            out.items.push_back(std::move(pool[i]));
        }
    }
    return out;
}

PriorityList select_exemplars_random(std::vector<ScoredUtterance> pool, std::size_t m,
                                     std::uint64_t seed) {
    Rng rng(Rng::mix(seed, 0xe4));
    const std::size_t n = pool.size();
    const std::size_t take = std::min(m, n);
    // Partial Fisher-Yates: position i receives a uniform pick from [i, n).
    for (std::size_t i = 0; i < take; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.next_below(n - i));
        std::swap(pool[i], pool[j]);
    }
    pool.resize(take);
    std::stable_sort(pool.begin(), pool.end(),
                     [](const ScoredUtterance& a, const ScoredUtterance& b) {
                         return a.u_score < b.u_score;
                     });
    PriorityList out;
    out.items = std::move(pool);
    return out;
}

PriorityList select_exemplars_herding(std::vector<ScoredUtterance> pool,
                                      const std::vector<std::vector<double>>& features,
                                      std::size_t m) {
    if (features.size() != pool.size())
        throw ShapeError("herding: features size does not match pool size");
    PriorityList out;
    if (pool.empty()) return out;
    const std::size_t dim = features.front().size();
    for (const auto& f : features)
        if (f.size() != dim) throw ShapeError("herding: inconsistent feature dimensions");

    std::vector<double> mean(dim, 0.0);
    for (const auto& f : features)
        for (std::size_t j = 0; j < dim; ++j) mean[j] += f[j];
    for (double& x : mean) x /= static_cast<double>(pool.size());

    const std::size_t take = std::min(m, pool.size());
    std::vector<char> taken(pool.size(), 0);
    std::vector<double> sum(dim, 0.0);
    for (std::size_t k = 1; k <= take; ++k) {
        std::size_t best = pool.size();
        double best_dist = 0.0;
        for (std::size_t i = 0; i < pool.size(); ++i) {
            if (taken[i]) continue;
            double dist = 0.0;
            for (std::size_t j = 0; j < dim; ++j) {
                const double delta = mean[j] - (sum[j] + features[i][j]) / static_cast<double>(k);
                dist += delta * delta;
            }
            if (best == pool.size() || dist < best_dist) {
                best = i;
                best_dist = dist;
            }
        }
        taken[best] = 1;
        for (std::size_t j = 0; j < dim; ++j) sum[j] += features[best][j];
        out.items.push_back(std::move(pool[best]));
    }
    return out;
}

std::vector<std::size_t> allocate_budget(std::size_t budget,
                                         std::span<const std::size_t> sizes) {
    std::size_t total = 0;
    for (std::size_t s : sizes) {
        if (s == 0) throw ValidationError("allocate_budget: task sizes must be >= 1");
        total += s;
    }
    std::vector<std::size_t> shares(sizes.size(), 0);
    if (sizes.empty()) return shares;
    if (budget >= total) {
        // Quotas meet or exceed every size; cap at the size, no redistribution.
        for (std::size_t i = 0; i < sizes.size(); ++i) shares[i] = sizes[i];
        return shares;
    }

    std::vector<double> remainder(sizes.size());
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < sizes.size(); ++i) {
        const double quota = static_cast<double>(budget) * static_cast<double>(sizes[i]) /
                             static_cast<double>(total);
        shares[i] = static_cast<std::size_t>(quota);
        remainder[i] = quota - static_cast<double>(shares[i]);
        assigned += shares[i];
    }
    std::vector<std::size_t> order(sizes.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    // Largest remainder first; ties go to the earlier task (stable sort on
    // index order).
    std::stable_sort(order.begin(), order.end(), [&remainder](std::size_t a, std::size_t b) {
        return remainder[a] > remainder[b];
    });
    for (std::size_t r = 0; assigned < budget; ++r, ++assigned) shares[order[r]] += 1;
    return shares;
}

void reduce_exemplars(ExemplarStore& store, std::span<const std::size_t> sizes) {
    for (const auto& [id, list] : store.per_task)
        if (id < 0 || static_cast<std::size_t>(id) >= sizes.size())
            throw ValidationError("reduce_exemplars: sizes does not cover stored task " +
                                  std::to_string(id));
    const std::vector<std::size_t> shares = allocate_budget(store.budget, sizes);
    for (auto& [id, list] : store.per_task) list.truncate(shares[static_cast<std::size_t>(id)]);
}

PriorityList make_pseudo_exemplars(
    const PriorityList& exemplars,
    const std::function<std::vector<std::string>(const DialogAct&)>& generate_fn,
    const std::function<double(const Utterance&)>& score_fn) {
    PriorityList out;
    out.items.reserve(exemplars.size());
    for (const ScoredUtterance& item : exemplars.items) {
        Utterance pseudo;
        pseudo.da = item.utt.da;
        pseudo.tokens = generate_fn(item.utt.da);
        for (std::size_t i = 0; i < pseudo.tokens.size(); ++i) {
            if (i) pseudo.raw_text += ' ';
            pseudo.raw_text += pseudo.tokens[i];
        }
        const double u = score_fn(pseudo);
        out.items.push_back({std::move(pseudo), u});
    }
    return out;
}

}  // namespace arper
