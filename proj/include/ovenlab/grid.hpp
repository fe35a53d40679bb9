#pragma once

#include <array>
#include <cstdlib>
#include <optional>
#include <queue>

namespace ovenlab {

inline constexpr int kGridWidth = 5;
inline constexpr int kGridHeight = 3;
inline constexpr int kGridCells = kGridWidth * kGridHeight;

// (col, row) indexed from the top-left corner
struct Cell {
    int col = 0;
    int row = 0;

    friend bool operator==(Cell a, Cell b) { return a.col == b.col && a.row == b.row; }
};

inline bool in_bounds(Cell c) {
    return c.col >= 0 && c.col < kGridWidth && c.row >= 0 && c.row < kGridHeight;
}

inline int cell_index(Cell c) { return c.row * kGridWidth + c.col; }

inline bool adjacent4(Cell a, Cell b) {
    return std::abs(a.col - b.col) + std::abs(a.row - b.row) == 1;
}

enum class TaskKind { SingleT, DualTN };

// The dual task layout is the single task layout plus the number counter;
// every other rule is shared.
struct GridLayout {
    Cell dispenser;
    Cell oven;
    Cell delivery;
    std::optional<Cell> number_counter;  // dual task only
    std::array<bool, kGridCells> walkable{};

    bool is_walkable(Cell c) const { return in_bounds(c) && walkable[cell_index(c)]; }
};

inline GridLayout canonical_layout(TaskKind task) {
    GridLayout g;
    g.dispenser = {0, 1};
    g.oven = {2, 0};
    g.delivery = {4, 1};
    if (task == TaskKind::DualTN) g.number_counter = Cell{2, 2};
    g.walkable.fill(true);
    g.walkable[cell_index(g.dispenser)] = false;
    g.walkable[cell_index(g.oven)] = false;
    g.walkable[cell_index(g.delivery)] = false;
    if (g.number_counter) g.walkable[cell_index(*g.number_counter)] = false;
    return g;
}

inline constexpr Cell kAgentStart = {1, 1};

// BFS over walkable cells; -1 for unreachable (and for counter cells).
inline std::array<int, kGridCells> bfs_distances(const GridLayout& g, Cell from) {
    std::array<int, kGridCells> dist;
    dist.fill(-1);
    if (!g.is_walkable(from)) return dist;
    std::queue<Cell> q;
    dist[cell_index(from)] = 0;
    q.push(from);
    while (!q.empty()) {
        const Cell c = q.front();
        q.pop();
        const int d = dist[cell_index(c)];
        const Cell nbrs[4] = {{c.col, c.row - 1}, {c.col, c.row + 1}, {c.col - 1, c.row}, {c.col + 1, c.row}};
        for (const Cell n : nbrs) {
            if (g.is_walkable(n) && dist[cell_index(n)] < 0) {
                dist[cell_index(n)] = d + 1;
                q.push(n);
            }
        }
    }
    return dist;
}

// Shortest walkable distance to any cell 4-adjacent to `target`.
inline int distance_to_adjacent(const GridLayout& g, Cell from, Cell target) {
    const auto dist = bfs_distances(g, from);
    int best = -1;
    for (int r = 0; r < kGridHeight; ++r) {
        for (int c = 0; c < kGridWidth; ++c) {
            const Cell cand{c, r};
            if (!g.is_walkable(cand) || !adjacent4(cand, target)) continue;
            const int d = dist[cell_index(cand)];
            if (d >= 0 && (best < 0 || d < best)) best = d;
        }
    }
    return best;
}

}  // namespace ovenlab
