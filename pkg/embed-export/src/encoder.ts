import { Encoder } from './types.js';

/**
 * Built-in frozen encoder: each subword maps to a deterministic unit
 * vector derived from a 64-bit hash of (seed, subword). No downloads, no
 * state; the same flags always produce the same vectors.
 *
 * Encoder names of the form "hash-<dim>" select this encoder. Any other
 * name is treated as a model-hub identifier, which requires network
 * access this tool does not assume; loading one fails with a clear error.
 */
export function resolveEncoder(name: string, seed: number): Encoder {
  const match = /^hash-(\d+)$/.exec(name);
  if (match) {
    return new HashEncoder(parseInt(match[1], 10), seed);
  }
  throw new Error(
    `encoder ${JSON.stringify(name)} is not available offline; ` +
    `use the built-in "hash-<dim>" encoder (e.g. hash-32, hash-768)`);
}

const FNV_OFFSET = 0xcbf29ce484222325n;
const FNV_PRIME = 0x100000001b3n;
const MASK64 = 0xffffffffffffffffn;

function fnv1a64(text: string, seed: number): bigint {
  let h = FNV_OFFSET ^ BigInt(seed);
  for (const byte of Buffer.from(text, 'utf-8')) {
    h ^= BigInt(byte);
    h = (h * FNV_PRIME) & MASK64;
  }
  return h;
}

/** splitmix64: a tiny, well-distributed PRNG over a 64-bit state. */
function splitmix64(state: bigint): [bigint, bigint] {
  state = (state + 0x9e3779b97f4a7c15n) & MASK64;
  let z = state;
  z = ((z ^ (z >> 30n)) * 0xbf58476d1ce4e5b9n) & MASK64;
  z = ((z ^ (z >> 27n)) * 0x94d049bb133111ebn) & MASK64;
  return [z ^ (z >> 31n), state];
}

function uniform(state: bigint): [number, bigint] {
  const [value, next] = splitmix64(state);
  return [Number(value >> 11n) / 2 ** 53, next];
}

export class HashEncoder implements Encoder {
  readonly name: string;
  readonly dim: number;
  private readonly seed: number;

  constructor(dim: number, seed: number) {
    if (!Number.isInteger(dim) || dim < 1) {
      throw new Error(`invalid encoder width ${dim}`);
    }
    this.dim = dim;
    this.seed = seed;
    this.name = `hash-${dim}`;
  }

  vectorFor(subword: string): number[] {
    let state = fnv1a64(subword, this.seed);
    const out = new Array<number>(this.dim);
    for (let i = 0; i < this.dim; i += 2) {
      // Box-Muller: two uniforms -> two gaussians
      let u1: number, u2: number;
      [u1, state] = uniform(state);
      [u2, state] = uniform(state);
      const radius = Math.sqrt(-2 * Math.log(u1 + 1e-300));
      out[i] = radius * Math.cos(2 * Math.PI * u2);
      if (i + 1 < this.dim) {
        out[i + 1] = radius * Math.sin(2 * Math.PI * u2);
      }
    }
    const norm = Math.sqrt(out.reduce((acc, v) => acc + v * v, 0));
    return out.map((v) => v / norm);
  }

  async encode(subwords: string[]): Promise<number[][]> {
    return subwords.map((s) => this.vectorFor(s));
  }
}
