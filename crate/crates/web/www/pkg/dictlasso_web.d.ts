/* tslint:disable */
/* eslint-disable */

export function conditionSweep(n: number, p: number, kappas: Float64Array, trials: number, seed: number): string;

export function demoSignal(p: number, jumps: number, sigma: number, seed: number): string;

export function denoise(signal: Float64Array, lambda: number, fused_weight: number): string;

export function graphKappa(p: number, ratios: Float64Array, trials: number, seed: number): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly conditionSweep: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number, number];
    readonly demoSignal: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly denoise: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly graphKappa: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
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
