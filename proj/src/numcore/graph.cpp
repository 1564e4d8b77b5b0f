#include <unordered_set>

#include "ntp/numcore.hpp"

namespace ntp {

Array& Node::grad_buffer() {
    if (grad.size() != value.size()) grad = Array(value.shape(), 0.0);
    return grad;
}

void Node::accumulate(std::span<const double> g) {
    auto& buf = grad_buffer();
    auto d = buf.data();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i];
}

Var param(Array value) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->requires_grad = true;
    return n;
}

Var constant(Array value) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    return n;
}

void backward(const Var& root) {
    if (!root || root->value.size() != 1) {
        throw ContractError("backward() needs a scalar root, got shape " +
                            (root ? shape_str(root->value.shape()) : std::string("<null>")));
    }
    if (!root->requires_grad) return;

    // Iterative post-order DFS gives a topological order with each node once.
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack{{root.get(), 0}};
    seen.insert(root.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* p = node->parents[next++].get();
            if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    root->grad_buffer().data()[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward_fn && n->grad.size() == n->value.size()) n->backward_fn(*n);
    }
}

void zero_grad(std::span<const Var> params) {
    for (const auto& p : params) p->grad = Array();
}

} // namespace ntp
