//! Exact balanced transportation problem solved with the network simplex
//! method on the bipartite supply/demand graph.

const EPS: f64 = 1e-12;

/// Minimum cost of moving `supply` onto `demand` when a unit of mass moving
/// from source `i` to sink `j` costs `cost(i, j)`.
///
/// Both sides must be non-negative with equal totals (up to rounding). Zero
/// entries are dropped before solving.
pub fn transport_cost(supply: &[f64], demand: &[f64], cost: impl Fn(usize, usize) -> f64) -> f64 {
    let rows: Vec<usize> = (0..supply.len()).filter(|&i| supply[i] > 0.0).collect();
    let cols: Vec<usize> = (0..demand.len()).filter(|&j| demand[j] > 0.0).collect();
    if rows.is_empty() || cols.is_empty() {
        return 0.0;
    }
    let a: Vec<f64> = rows.iter().map(|&i| supply[i]).collect();
    let mut b: Vec<f64> = cols.iter().map(|&j| demand[j]).collect();
    // Absorb rounding so the problem is exactly balanced.
    let gap = a.iter().sum::<f64>() - b.iter().sum::<f64>();
    let last = b.len() - 1;
    b[last] = (b[last] + gap).max(0.0);
    let c: Vec<f64> = rows
        .iter()
        .flat_map(|&i| cols.iter().map(move |&j| (i, j)))
        .map(|(i, j)| cost(i, j))
        .collect();
    Simplex::new(a, b, c).solve()
}

struct Simplex {
    n: usize,
    m: usize,
    cost: Vec<f64>,
    /// Basic cells as `(row, col)`; always `n + m - 1` of them.
    basis: Vec<(usize, usize)>,
    flow: Vec<f64>,
    /// Basic cell indices touching each node; rows are `0..n`, columns
    /// `n..n+m`.
    adj: Vec<Vec<usize>>,
    u: Vec<f64>,
    v: Vec<f64>,
    parent_edge: Vec<usize>,
    depth: Vec<usize>,
    next_block: usize,
}

impl Simplex {
    fn new(mut a: Vec<f64>, mut b: Vec<f64>, cost: Vec<f64>) -> Self {
        let (n, m) = (a.len(), b.len());
        // North-west corner start: a staircase, hence a spanning tree.
        let (mut i, mut j) = (0, 0);
        let mut basis = Vec::with_capacity(n + m - 1);
        let mut flow = Vec::with_capacity(n + m - 1);
        loop {
            let q = a[i].min(b[j]);
            basis.push((i, j));
            flow.push(q);
            a[i] -= q;
            b[j] -= q;
            if i == n - 1 && j == m - 1 {
                break;
            }
            if i == n - 1 {
                j += 1;
            } else if j == m - 1 || a[i] <= b[j] {
                i += 1;
            } else {
                j += 1;
            }
        }
        let mut s = Simplex {
            n,
            m,
            cost,
            basis,
            flow,
            adj: vec![Vec::new(); n + m],
            u: vec![0.0; n],
            v: vec![0.0; m],
            parent_edge: vec![usize::MAX; n + m],
            depth: vec![0; n + m],
            next_block: 0,
        };
        for (e, &(i, j)) in s.basis.iter().enumerate() {
            s.adj[i].push(e);
            s.adj[n + j].push(e);
        }
        s
    }

    fn c(&self, i: usize, j: usize) -> f64 {
        self.cost[i * self.m + j]
    }

    fn other_end(&self, e: usize, node: usize) -> usize {
        let (i, j) = self.basis[e];
        if node == i {
            self.n + j
        } else {
            i
        }
    }

    /// Potentials with `u[0] = 0`, plus a rooted view of the tree.
    fn potentials(&mut self) {
        let n = self.n;
        let mut stack = vec![0usize];
        let mut seen = vec![false; n + self.m];
        seen[0] = true;
        self.u[0] = 0.0;
        self.depth[0] = 0;
        self.parent_edge[0] = usize::MAX;
        while let Some(node) = stack.pop() {
            for k in 0..self.adj[node].len() {
                let e = self.adj[node][k];
                let next = self.other_end(e, node);
                if seen[next] {
                    continue;
                }
                seen[next] = true;
                let (i, j) = self.basis[e];
                if next >= n {
                    self.v[j] = self.c(i, j) - self.u[i];
                } else {
                    self.u[i] = self.c(i, j) - self.v[j];
                }
                self.parent_edge[next] = e;
                self.depth[next] = self.depth[node] + 1;
                stack.push(next);
            }
        }
    }

    /// Block pricing: scan cells in blocks starting where the last search
    /// stopped and take the most negative reduced cost of the first block
    /// that has one.
    fn entering(&mut self) -> Option<(usize, usize)> {
        let total = self.n * self.m;
        let block = ((total as f64).sqrt() as usize).max(16).min(total);
        let scale = self.cost.iter().fold(1.0f64, |acc, c| acc.max(c.abs()));
        let tol = EPS * scale;
        let mut best: Option<(usize, f64)> = None;
        let mut scanned = 0;
        let mut k = self.next_block;
        while scanned < total {
            let (i, j) = (k / self.m, k % self.m);
            let rc = self.cost[k] - self.u[i] - self.v[j];
            if rc < -tol && best.is_none_or(|(_, b)| rc < b) {
                best = Some((k, rc));
            }
            scanned += 1;
            k = (k + 1) % total;
            if scanned % block == 0 && best.is_some() {
                break;
            }
        }
        self.next_block = k;
        best.map(|(k, _)| (k / self.m, k % self.m))
    }

    fn pivot(&mut self, i: usize, j: usize) {
        // Tree path from column j up to row i, as edges in walking order.
        let (mut x, mut y) = (self.n + j, i);
        let mut from_j = Vec::new();
        let mut from_i = Vec::new();
        while x != y {
            if self.depth[x] >= self.depth[y] {
                let e = self.parent_edge[x];
                from_j.push(e);
                x = self.other_end(e, x);
            } else {
                let e = self.parent_edge[y];
                from_i.push(e);
                y = self.other_end(e, y);
            }
        }
        from_j.extend(from_i.into_iter().rev());
        // Entering cell gains flow; path edges alternate starting with a loss.
        let mut leave = usize::MAX;
        let mut theta = f64::INFINITY;
        for &e in from_j.iter().step_by(2) {
            if self.flow[e] < theta {
                theta = self.flow[e];
                leave = e;
            }
        }
        let theta = theta.max(0.0);
        for (k, &e) in from_j.iter().enumerate() {
            if k % 2 == 0 {
                self.flow[e] = (self.flow[e] - theta).max(0.0);
            } else {
                self.flow[e] += theta;
            }
        }
        let (li, lj) = self.basis[leave];
        self.adj[li].retain(|&e| e != leave);
        self.adj[self.n + lj].retain(|&e| e != leave);
        self.basis[leave] = (i, j);
        self.flow[leave] = theta;
        self.adj[i].push(leave);
        self.adj[self.n + j].push(leave);
    }

    fn solve(mut self) -> f64 {
        // Guard against cycling on degenerate pivots.
        let limit = 50 * (self.n + self.m) * (self.n + self.m) + 1000;
        for _ in 0..limit {
            self.potentials();
            match self.entering() {
                Some((i, j)) => self.pivot(i, j),
                None => break,
            }
        }
        self.basis
            .iter()
            .zip(&self.flow)
            .map(|(&(i, j), &f)| f * self.c(i, j))
            .sum()
    }
}
