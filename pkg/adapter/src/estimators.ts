/**
 * Reference estimators, implemented independently of the benchmark host so
 * that cross-process agreement is evidence rather than tautology.
 *
 * - naive: (weighted) difference of treatment-group means
 * - iptw: self-normalized inverse-probability weighting on a logistic
 *   treatment model fit here by Newton iterations
 * - predictOutcomes: least-squares fit of outcome on treatment and
 *   covariates, returning fitted values per row
 */

export class EstimatorError extends Error {}

const PROPENSITY_CLIP = 0.01;
const GRADIENT_TOL = 1e-8;
const MAX_ITER = 100;
const RIDGE = 1e-6;

export interface Design {
  t: number[];
  y: number[];
  x: number[][]; // per-row feature vectors, no intercept column
}

/** Extract treatment/outcome/covariates from wire columns; categorical
 * covariates (string arrays) become one-hot indicators with the
 * first-appearance level as reference. Covariates are taken in
 * lexicographic column order. */
export function designFromColumns(
  columns: Record<string, (number | string)[]>,
  roles: Record<string, string>,
): Design {
  const names = Object.keys(roles).sort();
  const tName = names.find((n) => roles[n] === "treatment");
  const yName = names.find((n) => roles[n] === "outcome");
  if (!tName || !yName) {
    throw new EstimatorError("request needs treatment and outcome columns");
  }
  const tRaw = columns[tName];
  const yRaw = columns[yName];
  if (!tRaw || !yRaw) {
    throw new EstimatorError("treatment/outcome columns missing from payload");
  }
  const t = tRaw.map((v) => {
    if (v !== 0 && v !== 1) {
      throw new EstimatorError(`treatment values must be 0/1, got ${JSON.stringify(v)}`);
    }
    return v as number;
  });
  const y = yRaw.map((v) => {
    if (typeof v !== "number") {
      throw new EstimatorError("outcome values must be numeric");
    }
    return v;
  });

  const n = t.length;
  const features: number[][] = Array.from({ length: n }, () => []);
  for (const name of names) {
    if (roles[name] !== "covariate") continue;
    const values = columns[name];
    if (!values) throw new EstimatorError(`covariate ${name} missing from payload`);
    if (values.every((v) => typeof v === "number")) {
      values.forEach((v, i) => features[i].push(v as number));
    } else {
      // dictionary order of first appearance; level 0 is the reference
      const levels: string[] = [];
      const codes = values.map((v) => {
        const key = String(v);
        let code = levels.indexOf(key);
        if (code < 0) {
          levels.push(key);
          code = levels.length - 1;
        }
        return code;
      });
      for (let level = 1; level < levels.length; level++) {
        codes.forEach((c, i) => features[i].push(c === level ? 1 : 0));
      }
    }
  }
  return { t, y, x: features };
}

function groupMean(y: number[], pick: boolean[], w?: number[]): number {
  let num = 0;
  let den = 0;
  for (let i = 0; i < y.length; i++) {
    if (!pick[i]) continue;
    const wi = w ? w[i] : 1;
    num += wi * y[i];
    den += wi;
  }
  if (den === 0) {
    throw new EstimatorError("one treatment arm is empty");
  }
  return num / den;
}

export function naiveEstimate(t: number[], y: number[], weights?: number[]): number {
  const treated = t.map((v) => v === 1);
  const control = t.map((v) => v === 0);
  if (!treated.some(Boolean) || !control.some(Boolean)) {
    throw new EstimatorError("both treatment arms are required");
  }
  return groupMean(y, treated, weights) - groupMean(y, control, weights);
}

/** Gaussian elimination with partial pivoting; one ridge retry when singular. */
export function solve(a: number[][], b: number[], ridged = false): number[] {
  const n = b.length;
  const m = a.map((row, i) => [...row, b[i]]);
  for (let col = 0; col < n; col++) {
    let pivot = col;
    for (let r = col + 1; r < n; r++) {
      if (Math.abs(m[r][col]) > Math.abs(m[pivot][col])) pivot = r;
    }
    if (Math.abs(m[pivot][col]) < 1e-12) {
      if (ridged) {
        throw new EstimatorError("singular system");
      }
      const stabilized = a.map((row, i) =>
        row.map((v, j) => (i === j ? v + RIDGE : v)));
      return solve(stabilized, b, true);
    }
    [m[col], m[pivot]] = [m[pivot], m[col]];
    for (let r = 0; r < n; r++) {
      if (r === col) continue;
      const f = m[r][col] / m[col][col];
      for (let c = col; c <= n; c++) m[r][c] -= f * m[col][c];
    }
  }
  return m.map((row, i) => row[n] / m[i][i]);
}

function sigmoid(z: number): number {
  return z >= 0 ? 1 / (1 + Math.exp(-z)) : Math.exp(z) / (1 + Math.exp(z));
}

/** Newton-iteration logistic regression; x rows carry no intercept column. */
export function logisticFit(x: number[][], t: number[]): number[] {
  const n = t.length;
  const p = (x[0]?.length ?? 0) + 1;
  const rows = x.map((r) => [1, ...r]);
  let beta = new Array(p).fill(0);
  for (let iter = 0; iter < MAX_ITER; iter++) {
    const mu = rows.map((r) => sigmoid(r.reduce((s, v, j) => s + v * beta[j], 0)));
    const grad = new Array(p).fill(0);
    for (let i = 0; i < n; i++) {
      const resid = t[i] - mu[i];
      for (let j = 0; j < p; j++) grad[j] += rows[i][j] * resid;
    }
    if (Math.max(...grad.map(Math.abs)) < GRADIENT_TOL) break;
    const hess: number[][] = Array.from({ length: p }, () => new Array(p).fill(0));
    for (let i = 0; i < n; i++) {
      const w = mu[i] * (1 - mu[i]);
      for (let j = 0; j < p; j++) {
        for (let k = j; k < p; k++) {
          hess[j][k] += w * rows[i][j] * rows[i][k];
        }
      }
    }
    for (let j = 0; j < p; j++) {
      for (let k = 0; k < j; k++) hess[j][k] = hess[k][j];
    }
    const delta = solve(hess, grad);
    const step = Math.max(...delta.map(Math.abs));
    const scale = step > 10 ? 10 / step : 1;
    beta = beta.map((b, j) => b + scale * delta[j]);
    if (!beta.every(Number.isFinite)) {
      throw new EstimatorError("logistic fit diverged");
    }
  }
  return beta;
}

export function iptwEstimate(design: Design): number {
  const { t, y, x } = design;
  if (!t.some((v) => v === 1) || !t.some((v) => v === 0)) {
    throw new EstimatorError("both treatment arms are required");
  }
  const beta = logisticFit(x, t);
  const clip = (v: number) =>
    Math.min(Math.max(v, PROPENSITY_CLIP), 1 - PROPENSITY_CLIP);
  let num1 = 0, den1 = 0, num0 = 0, den0 = 0;
  for (let i = 0; i < t.length; i++) {
    const row = [1, ...x[i]];
    const e = clip(sigmoid(row.reduce((s, v, j) => s + v * beta[j], 0)));
    if (t[i] === 1) {
      num1 += y[i] / e;
      den1 += 1 / e;
    } else {
      num0 += y[i] / (1 - e);
      den0 += 1 / (1 - e);
    }
  }
  return num1 / den1 - num0 / den0;
}

/** Least-squares fit of y on [1, t, covariates]; returns fitted values. */
export function predictOutcomes(design: Design, weights?: number[]): number[] {
  const { t, y, x } = design;
  const rows = x.map((r, i) => [1, t[i], ...r]);
  const p = rows[0].length;
  const gram: number[][] = Array.from({ length: p }, () => new Array(p).fill(0));
  const rhs = new Array(p).fill(0);
  for (let i = 0; i < rows.length; i++) {
    const w = weights ? weights[i] : 1;
    for (let j = 0; j < p; j++) {
      rhs[j] += w * rows[i][j] * y[i];
      for (let k = j; k < p; k++) gram[j][k] += w * rows[i][j] * rows[i][k];
    }
  }
  for (let j = 0; j < p; j++) {
    for (let k = 0; k < j; k++) gram[j][k] = gram[k][j];
  }
  const coef = solve(gram, rhs);
  return rows.map((r) => r.reduce((s, v, j) => s + v * coef[j], 0));
}
