/* tslint:disable */
/* eslint-disable */

/**
 * One DMS aggregation for the given per-client iteration counts.
 * `slope_boost` multiplies G² so the spacing is visible at small N.
 */
export function dms_explore(tau: Uint32Array, seed: number, slope_boost: number): string;

/**
 * Wall-clock of `rounds` synchronous rounds against `rounds` fixed intervals
 * for two-tier populations of growing heterogeneity.
 */
export function latency_sweep(clients: number, mean_rate: number, max_delta: number, steps: number, required: number, rounds: number): string;

/**
 * Global loss per aggregation for a list of comma-separated strategies on a
 * preset scenario.
 */
export function loss_curves(scenario: string, clients: number, intervals: number, seed: number, strategies: string): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly dms_explore: (a: number, b: number, c: number, d: number) => [number, number];
    readonly latency_sweep: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number];
    readonly loss_curves: (a: number, b: number, c: number, d: number, e: number, f: number, g: number) => [number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
    readonly __wbindgen_start: () => void;
}

export type SyncInitInput = BufferSource | WebAssembly.Module;

/**
 * Instantiates the given `module`, which can either be bytes or
 * a precompiled `WebAssembly.Module`.
 *
 * @param {{ module: SyncInitInput }} module - Passing `SyncInitInput` directly is deprecated.
 *
 * @returns {InitOutput}
 */
export function initSync(module: { module: SyncInitInput } | SyncInitInput): InitOutput;

/**
 * If `module_or_path` is {RequestInfo} or {URL}, makes a request and
 * for everything else, calls `WebAssembly.instantiate` directly.
 *
 * @param {{ module_or_path: InitInput | Promise<InitInput> }} module_or_path - Passing `InitInput` directly is deprecated.
 *
 * @returns {Promise<InitOutput>}
 */
export default function __wbg_init (module_or_path?: { module_or_path: InitInput | Promise<InitInput> } | InitInput | Promise<InitInput>): Promise<InitOutput>;
