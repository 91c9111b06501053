#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "conceptforge/backend.hpp"
#include "conceptforge/constraints.hpp"
#include "conceptforge/loss.hpp"
#include "conceptforge/parallel.hpp"
#include "conceptforge/render.hpp"
#include "conceptforge/trainer.hpp"

namespace conceptforge {

/// A mixing parent: a learned concept to render, or a fixed set of (real) images.
struct MixParent {
    std::string id;
    std::optional<ConceptArtifact> learned;
    std::vector<GeneratedImage> images;
};

struct MixSpec {
    std::vector<MixParent> parents;
    std::size_t images_per_parent = 4;
    std::optional<std::vector<double>> weights;  // one per parent
    std::string render_template = "A photo of a {}";
    std::optional<std::string> init_word;        // defaults to the first concept parent's category

    void validate() const {
        if (parents.empty()) throw ConfigError("mix: at least one parent is required");
        if (images_per_parent < 1) throw ConfigError("mix: images_per_parent must be >= 1");
        if (weights) ConstraintSet::validate_weights(*weights, parents.size());
        for (const auto& p : parents)
            if (!p.learned && p.images.empty()) throw ConfigError("mix: parent '" + p.id + "' has neither a concept nor images");
    }
};

struct TaggedEmbedding {
    ImageEmbedding embedding;
    std::size_t parent = 0;
};

/// Renders (or takes) each parent's images and encodes them: the image constraint set.
inline std::vector<TaggedEmbedding> build_image_constraints(const Backends& b, const MixSpec& spec, std::uint64_t seed) {
    spec.validate();
    std::vector<TaggedEmbedding> out;
    for (std::size_t p = 0; p < spec.parents.size(); ++p) {
        const auto& parent = spec.parents[p];
        const auto images = parent.learned ? render(b, parent.learned->token, spec.render_template, spec.images_per_parent,
                                                    mix_seed(seed, 0x1A6E, p))
                                           : parent.images;
        for (const auto& img : images) out.push_back({encode_image(b, img), p});
    }
    return out;
}

/// Per-embedding weights: each parent's weight split evenly across its images.
inline std::vector<double> embedding_weights(const MixSpec& spec, const std::vector<TaggedEmbedding>& tagged) {
    std::vector<std::size_t> counts(spec.parents.size(), 0);
    for (const auto& t : tagged) ++counts[t.parent];
    std::vector<double> w;
    w.reserve(tagged.size());
    for (const auto& t : tagged) {
        const double pw = spec.weights ? (*spec.weights)[t.parent] : 1.0 / static_cast<double>(spec.parents.size());
        w.push_back(pw / static_cast<double>(counts[t.parent]));
    }
    // renormalize away rounding so the sum is 1 to the last bit we can manage
    double sum = 0.0;
    for (double x : w) sum += x;
    for (double& x : w) x /= sum;
    return w;
}

/// Optimizes a fresh token toward the parents' image embeddings (no negative constraints).
inline ConceptArtifact mix_concepts(const Backends& b, const MixSpec& spec, TrainingConfig config,
                                    const PromptTemplateBank& bank = PromptTemplateBank(), std::string id = "mix") {
    spec.validate();
    config.adaptive_negatives = false;
    config.validate();

    const auto tagged = build_image_constraints(b, spec, config.seed);
    std::vector<ImageEmbedding> targets;
    for (const auto& t : tagged) targets.push_back(t.embedding);
    const std::optional<std::vector<double>> weights = embedding_weights(spec, tagged);

    std::optional<std::string> init = spec.init_word;
    if (!init)
        for (const auto& p : spec.parents)
            if (p.learned) {
                init = p.learned->token.category;
                break;
            }

    TrainerState state;
    if (init) {
        state.token = init_token(b, *init, config.init_sigma, config.seed);
    } else {
        state.token.embedding = gaussian_vector(b.text->token_dim(), mix_seed(config.seed, 0x1417));
        state.token.category = "mix";
    }

    ConceptArtifact art;
    art.id = std::move(id);
    art.config = config;
    art.templates = bank.templates();
    for (std::size_t p = 0; p < spec.parents.size(); ++p)
        art.parents.push_back({spec.parents[p].id,
                               spec.weights ? (*spec.weights)[p] : 1.0 / static_cast<double>(spec.parents.size())});

    auto trace_parents = [&](std::size_t step) {
        const auto samples = probe_token(b, state.token.embedding, bank, config.prior_samples, mix_seed(config.seed, 0x7ACE));
        for (std::size_t p = 0; p < spec.parents.size(); ++p) {
            double sim = 0.0, wsum = 0.0;
            for (std::size_t i = 0; i < tagged.size(); ++i) {
                if (tagged[i].parent != p) continue;
                for (const auto& s : samples) sim += s.weight * dot(tagged[i].embedding.values, s.output.values);
                wsum += 1.0;
            }
            art.trace.records.push_back({step, "parent:" + spec.parents[p].id, Polarity::positive, sim / wsum});
        }
    };

    trace_parents(0);
    const auto sampling = config.sampling();
    while (state.step < config.total_steps) {
        MixLoss loss;
        try {
            loss = mix_loss(b, state.token, targets, weights, bank, sampling, step_seed(config.seed, state.step));
        } catch (const BackendError& e) {
            throw BackendError("mix step " + std::to_string(state.step + 1) + ": " + e.what());
        }
        state.adam.update(state.token.embedding, loss.gradient, config.learning_rate, config.beta1, config.beta2,
                          config.adam_epsilon);
        ++state.step;
        state.token.check_finite();
        art.losses.push_back(loss.value);
        if (state.step % config.trace_every == 0 || state.step == config.total_steps) trace_parents(state.step);
    }
    art.token = state.token;
    return art;
}

// ---- family trees ----

struct EvolutionNode {
    std::string id;
    std::vector<std::string> parent_ids;
    std::vector<double> weights;
    std::size_t generation = 0;
    std::string artifact_path;  // artifact directory, when the node is a learned concept
    std::string images_path;    // image directory, when the node is a real-image root
    std::optional<ConceptArtifact> learned;
    std::vector<GeneratedImage> images;
};

struct Pairing {
    std::vector<std::string> parents;
    std::optional<std::vector<double>> weights;
    std::string child_id;  // defaults to parents joined by '+'
};

class EvolutionTree {
public:
    const std::vector<EvolutionNode>& nodes() const noexcept { return nodes_; }
    std::vector<EvolutionNode>& nodes() noexcept { return nodes_; }

    const EvolutionNode* find(const std::string& id) const {
        auto it = std::find_if(nodes_.begin(), nodes_.end(), [&](const auto& n) { return n.id == id; });
        return it == nodes_.end() ? nullptr : &*it;
    }

    std::size_t max_generation() const {
        std::size_t g = 0;
        for (const auto& n : nodes_) g = std::max(g, n.generation);
        return g;
    }

    EvolutionNode& add_root(EvolutionNode node) {
        if (node.id.empty()) throw ConfigError("evolution: node id must be non-empty");
        if (find(node.id)) throw ConfigError("evolution: duplicate node id '" + node.id + "'");
        node.parent_ids.clear();
        node.weights.clear();
        node.generation = 0;
        nodes_.push_back(std::move(node));
        return nodes_.back();
    }

    /// Inserts a derived node; parents must already exist, so the graph stays acyclic.
    EvolutionNode& add_child(EvolutionNode node) {
        if (node.id.empty()) throw ConfigError("evolution: node id must be non-empty");
        if (find(node.id)) throw ConfigError("evolution: node '" + node.id + "' already exists (cyclic or duplicate lineage)");
        if (node.parent_ids.empty()) throw ConfigError("evolution: child '" + node.id + "' has no parents");
        std::size_t g = 0;
        for (const auto& pid : node.parent_ids) {
            if (pid == node.id) throw ConfigError("evolution: node '" + node.id + "' lists itself as parent (cycle)");
            const auto* p = find(pid);
            if (!p) throw ConfigError("evolution: unknown parent '" + pid + "' for '" + node.id + "'");
            g = std::max(g, p->generation);
        }
        node.generation = g + 1;
        nodes_.push_back(std::move(node));
        return nodes_.back();
    }

    nlohmann::json to_json() const {
        nlohmann::json nodes = nlohmann::json::array();
        nlohmann::json edges = nlohmann::json::array();
        for (const auto& n : nodes_) {
            nodes.push_back({{"id", n.id},
                             {"generation", n.generation},
                             {"parents", n.parent_ids},
                             {"weights", n.weights},
                             {"artifact", n.artifact_path},
                             {"images", n.images_path}});
            for (std::size_t i = 0; i < n.parent_ids.size(); ++i)
                edges.push_back({{"from", n.parent_ids[i]}, {"to", n.id}, {"weight", i < n.weights.size() ? n.weights[i] : 0.0}});
        }
        return {{"format", "conceptforge-tree/1"}, {"nodes", nodes}, {"edges", edges}};
    }

    /// Rebuilds a tree; rejects cycles, dangling parents and inconsistent generation numbers.
    static EvolutionTree from_json(const nlohmann::json& j) {
        std::vector<EvolutionNode> pending;
        try {
            for (const auto& n : j.at("nodes")) {
                EvolutionNode node;
                node.id = n.at("id").get<std::string>();
                node.generation = n.at("generation").get<std::size_t>();
                node.parent_ids = n.at("parents").get<std::vector<std::string>>();
                node.weights = n.at("weights").get<std::vector<double>>();
                node.artifact_path = n.value("artifact", "");
                node.images_path = n.value("images", "");
                pending.push_back(std::move(node));
            }
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(std::string("evolution tree: ") + e.what());
        }
        // Kahn-style: repeatedly admit nodes whose parents are all present.
        EvolutionTree tree;
        while (!pending.empty()) {
            auto ready = std::find_if(pending.begin(), pending.end(), [&](const EvolutionNode& n) {
                return std::all_of(n.parent_ids.begin(), n.parent_ids.end(), [&](const auto& p) { return tree.find(p) != nullptr; });
            });
            if (ready == pending.end())
                throw ConfigError("evolution tree: cyclic or dangling lineage at node '" + pending.front().id + "'");
            EvolutionNode node = std::move(*ready);
            pending.erase(ready);
            const std::size_t declared = node.generation;
            auto weights = node.weights;
            auto& added = node.parent_ids.empty() ? tree.add_root(std::move(node)) : tree.add_child(std::move(node));
            added.weights = std::move(weights);
            if (added.generation != declared)
                throw ConfigError("evolution tree: node '" + added.id + "' declares generation " + std::to_string(declared) +
                                  ", lineage implies " + std::to_string(added.generation));
        }
        return tree;
    }

private:
    std::vector<EvolutionNode> nodes_;
};

inline MixParent as_parent(const EvolutionNode& n) {
    MixParent p;
    p.id = n.id;
    p.learned = n.learned;
    p.images = n.images;
    if (!p.learned && p.images.empty()) throw ConfigError("evolution: node '" + n.id + "' has no concept or images loaded");
    return p;
}

struct EvolveSettings {
    std::size_t images_per_parent = 4;
    std::string render_template = "A photo of a {}";
    std::size_t threads = 1;
};

/// One mixing run per pairing (run concurrently when threads > 1); returns the ids of the new nodes.
inline std::vector<std::string> evolve_generation(const Backends& b, EvolutionTree& tree, const std::vector<Pairing>& pairings,
                                                  const TrainingConfig& config, const EvolveSettings& settings = {},
                                                  const PromptTemplateBank& bank = PromptTemplateBank()) {
    std::vector<std::string> ids;
    std::vector<MixSpec> specs;
    std::set<std::string> fresh;
    for (const auto& pr : pairings) {
        std::string id = pr.child_id;
        if (id.empty())
            for (const auto& p : pr.parents) id += (id.empty() ? "" : "+") + p;
        if (tree.find(id) || fresh.count(id)) throw ConfigError("evolution: node '" + id + "' already exists (cyclic or duplicate lineage)");
        MixSpec spec;
        spec.images_per_parent = settings.images_per_parent;
        spec.render_template = settings.render_template;
        spec.weights = pr.weights;
        for (const auto& pid : pr.parents) {
            if (pid == id) throw ConfigError("evolution: pairing '" + id + "' names itself as a parent (cycle)");
            if (fresh.count(pid)) throw ConfigError("evolution: '" + pid + "' is produced in the same generation; pair it in the next one");
            const auto* node = tree.find(pid);
            if (!node) throw ConfigError("evolution: unknown parent id '" + pid + "'");
            spec.parents.push_back(as_parent(*node));
        }
        spec.validate();
        fresh.insert(id);
        ids.push_back(id);
        specs.push_back(std::move(spec));
    }

    std::vector<ConceptArtifact> children(specs.size());
    parallel_for(specs.size(), settings.threads, [&](std::size_t i) {
        TrainingConfig c = config;
        c.seed = mix_seed(config.seed, stable_hash(ids[i]));
        children[i] = mix_concepts(b, specs[i], c, bank, ids[i]);
    });

    for (std::size_t i = 0; i < specs.size(); ++i) {
        EvolutionNode node;
        node.id = ids[i];
        node.parent_ids = pairings[i].parents;
        for (const auto& link : children[i].parents) node.weights.push_back(link.weight);
        node.learned = std::move(children[i]);
        tree.add_child(std::move(node));
    }
    return ids;
}

} // namespace conceptforge
