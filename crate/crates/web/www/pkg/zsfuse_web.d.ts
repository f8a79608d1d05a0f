/* tslint:disable */
/* eslint-disable */

/**
 * Confidence of each scheme as the top probability of an `n_classes` row
 * sweeps from uniform to one-hot.
 */
export function confidenceCurves(n_classes: number, points: number): string;

/**
 * Fuses one test sample. `scores_json` is `[[...], [...], [...]]`, one cosine
 * row per method over the same classes.
 */
export function fuseSample(scores_json: string, temperature: number, scheme: string): string;

/**
 * Runs the synthetic benchmark; `params_json` holds [`demo::BenchmarkParams`].
 */
export function runBenchmark(params_json: string): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly confidenceCurves: (a: number, b: number) => [number, number, number, number];
    readonly fuseSample: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
    readonly runBenchmark: (a: number, b: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
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
