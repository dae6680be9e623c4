import { describe, expect, it } from 'vitest';

import { HashEncoder, resolveEncoder } from '../src/encoder.js';

describe('resolveEncoder', () => {
  it('builds the hash encoder from its name pattern', () => {
    const enc = resolveEncoder('hash-48', 0);
    expect(enc.dim).toBe(48);
    expect(enc.name).toBe('hash-48');
  });

  it('rejects hub encoders that need network access', () => {
    expect(() => resolveEncoder('bert-base-uncased', 0))
      .toThrow(/not available offline/);
  });
});

describe('HashEncoder', () => {
  it('is deterministic for the same seed', async () => {
    const a = await new HashEncoder(32, 7).encode(['foo', 'bar']);
    const b = await new HashEncoder(32, 7).encode(['foo', 'bar']);
    expect(a).toEqual(b);
  });

  it('changes with the seed and the subword', async () => {
    const base = new HashEncoder(32, 7).vectorFor('foo');
    expect(new HashEncoder(32, 8).vectorFor('foo')).not.toEqual(base);
    expect(new HashEncoder(32, 7).vectorFor('fop')).not.toEqual(base);
  });

  it('emits unit vectors of the configured width', () => {
    for (const dim of [3, 32, 768]) {
      const v = new HashEncoder(dim, 0).vectorFor('token');
      expect(v).toHaveLength(dim);
      const norm = Math.sqrt(v.reduce((s, x) => s + x * x, 0));
      expect(norm).toBeCloseTo(1.0, 10);
    }
  });

  it('rejects invalid widths', () => {
    expect(() => new HashEncoder(0, 0)).toThrow(/width/);
  });
});
