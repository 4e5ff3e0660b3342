# Unit tests package marker
