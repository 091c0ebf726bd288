# apps module

